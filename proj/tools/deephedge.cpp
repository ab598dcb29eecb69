// Command-line front end. Exit codes: 0 success, 1 error, 2 usage error,
// 3 run finished with failed pairs. Errors are reported on stderr as one
// JSON object.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "deephedge/experiment.hpp"

namespace {

using deephedge::exp::json;

int report_error(const std::string& kind, const std::string& message) {
    std::cerr << json{{"status", "error"}, {"kind", kind}, {"message", message}}.dump() << '\n';
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    namespace dx = deephedge::exp;
    CLI::App app{"Data-driven hedging experiments: simulate, build samples, train, report"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_override;
    bool quiet = false;

    auto* simulate = app.add_subcommand("simulate", "Write a synthetic quote panel and its sidecar");
    simulate->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    simulate->add_option("-o,--out", output_override, "output directory (overrides config)");

    auto* validate = app.add_subcommand("validate-config", "Check a config and print it with defaults resolved");
    validate->add_option("-c,--config", config_path, "experiment config (JSON)")->required();

    auto* run = app.add_subcommand("run", "Train and evaluate every (feature model, objective) pair");
    run->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    run->add_option("-o,--out", output_override, "output directory (overrides config)");
    run->add_flag("-q,--quiet", quiet, "no progress output");

    dx::BuildSamplesRequest bs_req;
    std::optional<double> bs_rate;
    auto* build = app.add_subcommand("build-samples", "Pair quotes into hedging samples");
    build->add_option("--quotes", bs_req.quotes_path, "quote CSV")->required();
    build->add_option("-o,--out", bs_req.output_path, "sample CSV to write")->required();
    build->add_option("--feature", bs_req.feature_model, "feature model")->capture_default_str();
    build->add_option("--horizon", bs_req.horizon_days, "horizon in trading days")->capture_default_str();
    build->add_option("--option-type", bs_req.option_type, "call, put or both")->capture_default_str();
    build->add_option("--min-ttm-days", bs_req.filter.min_ttm_days, "minimum days to expiry")
        ->capture_default_str();
    build->add_option("--rate", bs_rate, "flat rate for the unit check (default: sidecar, else 0)");

    dx::ReportRequest rep_req;
    std::optional<int> rep_after;
    std::optional<double> rep_rate;
    auto* report = app.add_subcommand("report", "Score saved models on a quote or sample CSV");
    report->add_option("-m,--model", rep_req.model_paths, "model artifact(s)")->required();
    report->add_option("-d,--data", rep_req.data_path, "quote CSV or sample CSV")->required();
    report->add_option("-o,--out", rep_req.output_dir, "output directory")->required();
    report->add_option("--after-date", rep_after,
                       "score dates after this index (quote CSV default: the model's train end)");
    report->add_option("--rate", rep_rate, "flat rate for the unit check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        auto load = [&] {
            dx::ExperimentConfig c = dx::load_config(config_path);
            if (!output_override.empty()) c.output_dir = output_override;
            return c;
        };
        if (*validate) {
            std::cout << dx::effective_config(load()).dump(2) << '\n';
        } else if (*simulate) {
            const std::string path = dx::cmd_simulate(load());
            std::cout << json{{"status", "ok"}, {"quotes", path}}.dump() << '\n';
        } else if (*build) {
            bs_req.rate = bs_rate;
            const std::size_t n = dx::cmd_build_samples(bs_req);
            std::cout << json{{"status", "ok"}, {"samples", n}, {"path", bs_req.output_path}}.dump()
                      << '\n';
        } else if (*run) {
            const dx::RunResult r = dx::cmd_run(load(), quiet ? nullptr : &std::cerr);
            json pairs = json::array();
            for (const auto& p : r.pairs) {
                json jp{{"model", p.label}, {"ok", p.ok}};
                if (p.ok) {
                    jp["gain"] = p.report->overall.gain;
                    jp["artifact"] = p.artifact_path;
                } else {
                    jp["kind"] = p.error_kind;
                    jp["error"] = p.error;
                }
                pairs.push_back(std::move(jp));
            }
            const json summary{{"status", r.all_ok() ? "ok" : "partial_failure"},
                               {"output_dir", r.output_dir},
                               {"train_end_date", r.train_end_date},
                               {"pairs", std::move(pairs)}};
            (r.all_ok() ? std::cout : std::cerr) << summary.dump() << '\n';
            return r.all_ok() ? 0 : 3;
        } else if (*report) {
            rep_req.after_date = rep_after;
            rep_req.rate = rep_rate;
            const auto reports = dx::cmd_report(rep_req);
            json gains = json::object();
            for (const auto& r : reports) gains[r.model_name] = r.overall.gain;
            std::cout << json{{"status", "ok"}, {"gains", std::move(gains)}}.dump() << '\n';
        }
    } catch (const deephedge::Error& e) {
        return report_error(e.kind(), e.what());
    } catch (const std::exception& e) {
        return report_error("internal", e.what());
    }
    return 0;
}
