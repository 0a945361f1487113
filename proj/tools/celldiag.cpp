// celldiag: scenario-driven cell simulation, fault detection, learning,
// verification, identification, and campaign runner.

#include "celldiag/errors.hpp"
#include "celldiag/scenario.hpp"
#include "celldiag/version.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

namespace {

// exit codes per error class
constexpr int kOk = 0;
constexpr int kGenericError = 1;
constexpr int kConfigError = 2;
constexpr int kIoError = 3;
constexpr int kNumericError = 4;
constexpr int kGateRefused = 5;

int classify(const std::exception& e) {
    if (dynamic_cast<const celldiag::ConfigError*>(&e)) return kConfigError;
    if (dynamic_cast<const celldiag::DomainError*>(&e)) return kConfigError;
    if (dynamic_cast<const celldiag::StabilityError*>(&e)) return kNumericError;
    if (dynamic_cast<const celldiag::DivergedError*>(&e)) return kNumericError;
    if (dynamic_cast<const celldiag::ConditioningError*>(&e)) return kNumericError;
    if (dynamic_cast<const celldiag::DesignError*>(&e)) return kNumericError;
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kIoError;
    return kGenericError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cell fault-detection toolkit"};
    app.require_subcommand(1);

    std::string scenario_path, record_path, problem_path, campaign_path, artifact_path, out_dir;
    unsigned workers = 0;

    auto* simulate = app.add_subcommand("simulate", "run a scenario protocol and persist the cycle record");
    simulate->add_option("scenario", scenario_path, "scenario file")->required();

    auto* detect = app.add_subcommand("detect", "run the detection observers over a record");
    detect->add_option("scenario", scenario_path, "scenario file")->required();
    detect->add_option("record", record_path, "cycle record csv")->required();

    auto* calibrate = app.add_subcommand("calibrate", "calibrate residual thresholds from no-fault runs");
    calibrate->add_option("scenario", scenario_path, "scenario file")->required();

    auto* learn = app.add_subcommand("learn", "fit the GP uncertainty models on a clean record");
    learn->add_option("scenario", scenario_path, "scenario file")->required();
    learn->add_option("record", record_path, "cycle record csv")->required();

    auto* identify = app.add_subcommand("identify", "identify cell parameters from measured records");
    identify->add_option("problem", problem_path, "identification problem json")->required();
    identify->add_option("-o,--out", out_dir, "output directory (default: problem dir)");

    auto* verify = app.add_subcommand("verify", "Lyapunov gamma-sweep audit of the observer gains");
    verify->add_option("scenario", scenario_path, "scenario file")->required();

    auto* campaign = app.add_subcommand("campaign", "run a scenario campaign with sweeps");
    campaign->add_option("campaign", campaign_path, "campaign json")->required();
    campaign->add_option("-j,--workers", workers, "worker threads (0 = hardware)");

    auto* schema = app.add_subcommand("schema-check", "validate a persisted artifact");
    schema->add_option("artifact", artifact_path, "artifact path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) {
            const auto s = celldiag::Scenario::load(scenario_path);
            const auto r = celldiag::cmd_simulate(s);
            std::printf("record: %s\n", r.record_csv.c_str());
            std::printf("metadata: %s\n", r.meta_json.c_str());
            std::printf("samples: %zu\n", r.record.size());
            return kOk;
        }
        if (*detect) {
            const auto s = celldiag::Scenario::load(scenario_path);
            const auto r = celldiag::cmd_detect(s, record_path);
            if (!r.gp_loaded) {
                std::fprintf(stderr, "warning: no GP artifacts found, running with omega_hat = 0\n");
            }
            std::printf("residuals: %s\n", r.residual_csv.c_str());
            std::printf("decision: %s\n", r.decision_json.c_str());
            std::printf("voltage fault: %s", r.decision.first_crossing_V ? "yes" : "no");
            if (r.decision.first_crossing_V) std::printf(" (first crossing %g s)", *r.decision.first_crossing_V);
            std::printf("\nthermal fault: %s", r.decision.first_crossing_T ? "yes" : "no");
            if (r.decision.first_crossing_T) std::printf(" (first crossing %g s)", *r.decision.first_crossing_T);
            std::printf("\n");
            return kOk;
        }
        if (*calibrate) {
            const auto s = celldiag::Scenario::load(scenario_path);
            const auto th = celldiag::cmd_calibrate(s);
            std::printf("delta_V = %g V\ndelta_T = %g K\n", th.delta_V, th.delta_T);
            std::printf("thresholds: %s\n", (s.output_dir / "thresholds.cfg").c_str());
            return kOk;
        }
        if (*learn) {
            const auto s = celldiag::Scenario::load(scenario_path);
            const auto r = celldiag::cmd_learn(s, record_path);
            if (r.refused) {
                std::fprintf(stderr,
                             "refused: the record is flagged faulty; the learning loop only "
                             "trains on clean cycles\n");
                return kGateRefused;
            }
            std::printf("gp artifacts: %s, %s (version %d)\n", r.gp_v_json.c_str(),
                        r.gp_t_json.c_str(), r.version);
            return kOk;
        }
        if (*identify) {
            const std::filesystem::path problem(problem_path);
            const std::filesystem::path out =
                out_dir.empty() ? std::filesystem::absolute(problem).parent_path()
                                : std::filesystem::path(out_dir);
            const auto r = celldiag::cmd_identify(problem, out);
            std::printf("identified config: %s\n", r.identified_config.c_str());
            std::printf("report: %s\n", r.report_json.c_str());
            std::printf("final cost: %g (%ld evaluations)\n", r.report.final_cost,
                        r.report.evaluations);
            return kOk;
        }
        if (*verify) {
            const auto s = celldiag::Scenario::load(scenario_path);
            const auto r = celldiag::cmd_verify(s);
            std::fputs(r.table.c_str(), stdout);
            std::printf("report: %s\n", r.report_json.c_str());
            std::printf("%s\n", r.pass ? "PASS: both observers admit a passing gamma"
                                       : "FAIL: no passing gamma for at least one observer");
            return r.pass ? kOk : kNumericError;
        }
        if (*campaign) {
            const auto summary = celldiag::run_campaign(campaign_path, workers);
            std::ifstream table(summary.summary_txt);
            std::stringstream ss;
            ss << table.rdbuf();
            std::fputs(ss.str().c_str(), stdout);
            std::printf("summary: %s\n", summary.summary_json.c_str());
            return summary.all_ok ? kOk : kNumericError;
        }
        if (*schema) {
            const auto errors = celldiag::schema_check(artifact_path);
            if (errors.empty()) {
                std::printf("ok: %s\n", artifact_path.c_str());
                return kOk;
            }
            for (const auto& e : errors) std::fprintf(stderr, "schema: %s\n", e.c_str());
            return kConfigError;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return classify(e);
    }
    return kGenericError;
}
