#pragma once

namespace celldiag {

inline constexpr int kRecordCsvSchemaVersion = 1;
inline constexpr int kResidualCsvSchemaVersion = 1;
inline constexpr int kGpArtifactSchemaVersion = 1;
inline constexpr int kJsonArtifactSchemaVersion = 1;

/// Header of the cycle-record CSV; fixed and versioned.
inline constexpr const char* kRecordCsvHeader =
    "t,I,V_meas,T_meas,V_true,T_true,dV,dT,wV,wT";

/// Header of the residual-trace CSV written by `detect`.
inline constexpr const char* kResidualCsvHeader =
    "t,r_V,r_T,delta_V,delta_T,flag_V,flag_T";

}  // namespace celldiag
