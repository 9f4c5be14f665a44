// Command-line front end. Every subcommand maps onto one library operation;
// failures print {"error": kind, "message": text} on stderr and exit nonzero.
#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cascade/app.hpp"
#include "cascade/augmentation.hpp"
#include "cascade/domain.hpp"
#include "cascade/error.hpp"
#include "cascade/text.hpp"

using namespace cascade;

namespace {

int fail(const std::string& kind, const std::string& message, int code = 1) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
    return code;
}

void emit(const std::string& out, const std::string& content) {
    if (out.empty() || out == "-") std::cout << content;
    else write_file(out, content);
}

std::vector<std::string> read_lines(const std::string& file) {
    std::vector<std::string> out;
    for (const auto& line : text::split(read_file(file), '\n'))
        if (!text::trim(line).empty()) out.push_back(line);
    return out;
}

app::Server* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Hybrid intent detection: classifier, uncertainty routing, LLM prompting, OOS detection"};
    cli.require_subcommand(1);
    std::string config;
    bool omit_timing = false;
    std::string work_dir;
    cli.add_option("--work-dir", work_dir, "override the config's work_dir");
    cli.fallthrough();

    auto* validate = cli.add_subcommand("validate", "Check a dataset against its intent list");
    std::string v_intents, v_dataset;
    validate->add_option("--intents", v_intents, "intents JSON")->required();
    validate->add_option("--dataset", v_dataset, "utterances JSONL")->required();

    auto* augment = cli.add_subcommand("augment", "Generate OOS negatives by keyword corruption");
    std::string a_in, a_out;
    double a_ratio = 0.2;
    std::uint64_t a_seed = 0;
    augment->add_option("--config", config, "run config (writes <work_dir>/augmented.jsonl)");
    augment->add_option("--in", a_in, "train JSONL (standalone mode)");
    augment->add_option("--out", a_out, "output JSONL (standalone mode)");
    augment->add_option("--ratio", a_ratio, "|U| / |D|");
    augment->add_option("--seed", a_seed, "seed (standalone mode)");

    auto* train = cli.add_subcommand("train", "Train the head, build the vector store and label mask");
    train->add_option("--config", config)->required();

    auto* evaluate = cli.add_subcommand("evaluate", "Score the validation split and write a report");
    std::vector<std::string> e_systems{"classifier"};
    std::string e_out, e_csv, e_grid, e_theta;
    evaluate->add_option("--config", config)->required();
    evaluate->add_option("--system", e_systems, "classifier|llm|hybrid|two_step (repeatable or comma list)")
        ->delimiter(',');
    evaluate->add_option("--out", e_out, "report JSON (stdout when omitted)");
    evaluate->add_option("--csv", e_csv, "also write the report as CSV");
    evaluate->add_option("--grid", e_grid, "retrieval override k,t");
    evaluate->add_option("--theta", e_theta, "two-step threshold: a number or 'auto'");
    evaluate->add_flag("--omit-timing", omit_timing, "leave wall-clock latencies out of the report");

    auto* route = cli.add_subcommand("route", "Route queries through the hybrid system");
    std::vector<std::string> r_queries;
    std::string r_file, r_out;
    route->add_option("--config", config)->required();
    route->add_option("--query", r_queries, "query text (repeatable)");
    route->add_option("--queries", r_file, "file with one query per line");
    route->add_option("--out", r_out, "JSONL output (stdout when omitted)");
    route->add_flag("--omit-timing", omit_timing, "leave wall-clock latencies out of the output");

    auto* serve = cli.add_subcommand("serve", "Run the HTTP prediction service");
    std::string s_host = "127.0.0.1";
    int s_port = 8080;
    serve->add_option("--config", config)->required();
    serve->add_option("--host", s_host);
    serve->add_option("--port", s_port);

    auto* describe = cli.add_subcommand("descriptions", "Generate and cache intent descriptions with the LLM");
    describe->add_option("--config", config)->required();

    auto* oos2 = cli.add_subcommand("oos2", "Two-step OOS detection");
    oos2->require_subcommand(1);
    auto* build_bank = oos2->add_subcommand("build-bank", "Represent every train sentence");
    build_bank->add_option("--config", config)->required();
    auto* oos2_eval = oos2->add_subcommand("eval", "Evaluate the two-step detector");
    std::string o_theta = "auto", o_out;
    oos2_eval->add_option("--config", config)->required();
    oos2_eval->add_option("--theta", o_theta, "a number or 'auto'");
    oos2_eval->add_option("--out", o_out, "report JSON (stdout when omitted)");
    oos2_eval->add_flag("--omit-timing", omit_timing);

    auto* labspace = cli.add_subcommand("labspace", "Controlled label-space experiments");
    labspace->require_subcommand(1);
    auto* lab_run = labspace->add_subcommand("run", "Run the (scope, labels) grid");
    std::string l_system = "oracle", l_out, l_leaves = "data/leaves.jsonl";
    int l_repeats = 10;
    std::uint64_t l_seed = 0;
    std::vector<int> l_scopes, l_labels;
    lab_run->add_option("--system", l_system, "oracle|classifier|mock_llm|llm");
    lab_run->add_option("--out", l_out, "CSV output (stdout when omitted)");
    lab_run->add_option("--leaves", l_leaves, "leaf fixture");
    lab_run->add_option("--repeats", l_repeats);
    lab_run->add_option("--seed", l_seed, "master seed (ignored with --config)");
    lab_run->add_option("--scopes", l_scopes)->delimiter(',');
    lab_run->add_option("--labels", l_labels)->delimiter(',');
    lab_run->add_option("--config", config);

    try {
        cli.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return cli.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        if (*validate) {
            const auto d = load_dataset(v_intents, v_dataset);
            const auto violations = validate_dataset(d);
            if (violations.empty()) {
                std::cout << nlohmann::json{{"valid", true},
                                            {"train", d.train.size()},
                                            {"valid_in_scope", d.valid_in_scope.size()},
                                            {"valid_oos", d.valid_oos.size()}}
                                 .dump()
                          << "\n";
                return 0;
            }
            nlohmann::json list = nlohmann::json::array();
            for (const auto& v : violations) list.push_back({{"record", v.record}, {"message", v.message}});
            std::cerr << nlohmann::json{{"error", "invalid_dataset"}, {"violations", list}}.dump() << "\n";
            return 1;
        }

        if (*augment) {
            if (!a_in.empty()) {
                if (a_out.empty()) return fail("usage", "--out is required with --in", 2);
                Dataset d;
                parse_utterances(read_file(a_in), d);
                AugmentationConfig cfg;
                cfg.ratio = a_ratio;
                cfg.seed = derive_seed(a_seed, "augment");
                Dataset out;
                out.train = augment_dataset(d.train, cfg);
                write_file(a_out, serialize_utterances(out));
                std::cout << nlohmann::json{{"augmented", out.train.size()}}.dump() << "\n";
                return 0;
            }
            if (config.empty()) return fail("usage", "augment needs --config or --in/--out", 2);
            auto cfg = app::load_config(config);
            if (!work_dir.empty()) cfg.work_dir = work_dir;
            if (augment->count("--ratio")) cfg.augmentation.ratio = a_ratio;
            const auto out = app::run_augment(cfg);
            std::cout << nlohmann::json{{"augmented", out.size()},
                                        {"file", app::Artifacts{cfg.work_dir}.augmented().string()}}
                             .dump()
                      << "\n";
            return 0;
        }

        auto cfg = config.empty() ? app::RunConfig{} : app::load_config(config);
        if (omit_timing) cfg.report.include_timing = false;
        if (!work_dir.empty()) cfg.work_dir = work_dir;

        if (*train) {
            const auto s = app::run_train(cfg);
            std::cout << nlohmann::json{{"examples", s.examples},
                                        {"augmented", s.augmented},
                                        {"epochs", s.epoch_loss.size()},
                                        {"final_loss", s.epoch_loss.empty() ? 0.0 : s.epoch_loss.back()}}
                             .dump()
                      << "\n";
            return 0;
        }

        if (*evaluate || *oos2_eval) {
            std::vector<app::System> systems;
            std::string theta = e_theta, out = e_out;
            if (*oos2_eval) {
                systems.push_back(app::System::two_step);
                theta = o_theta;
                out = o_out;
            } else {
                for (const auto& s : e_systems) systems.push_back(app::system_from_string(s));
            }
            if (!e_grid.empty()) {
                const auto parts = text::split(e_grid, ',');
                if (parts.size() != 2) return fail("usage", "--grid expects k,t", 2);
                cfg.retrieval.k = std::stoi(parts[0]);
                cfg.retrieval.t = std::stod(parts[1]);
                cfg.retrieval.validate();
            }
            const bool calibrate = theta == "auto";
            if (!theta.empty() && !calibrate) {
                cfg.two_step.theta = std::stod(theta);
                cfg.two_step.validate();
            }
            const auto report = app::run_evaluate(cfg, systems, calibrate);
            emit(out, report.to_json());
            if (!e_csv.empty()) write_file(e_csv, report.to_csv());
            return 0;
        }

        if (*route) {
            auto queries = r_queries;
            if (!r_file.empty())
                for (auto& q : read_lines(r_file)) queries.push_back(std::move(q));
            if (queries.empty()) return fail("usage", "route needs --query or --queries", 2);
            std::string lines;
            for (const auto& p : app::run_route(cfg, queries))
                lines += app::prediction_json(p, cfg.report.include_timing).dump() + "\n";
            emit(r_out, lines);
            return 0;
        }

        if (*serve) {
            app::Server server(cfg);
            const int port = server.bind(s_host, s_port);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << nlohmann::json{{"listening", s_host + ":" + std::to_string(port)}}.dump() << std::endl;
            server.run();
            g_server = nullptr;
            return 0;
        }

        if (*describe) {
            std::cout << nlohmann::json{{"descriptions", app::run_descriptions(cfg)}}.dump() << "\n";
            return 0;
        }

        if (*build_bank) {
            const auto bank = app::run_build_bank(cfg);
            std::cout << nlohmann::json{{"rows", bank.rows.rows()}, {"provider", bank.provider_id},
                                        {"template", bank.template_id}}
                             .dump()
                      << "\n";
            return 0;
        }

        if (*lab_run) {
            if (config.empty()) cfg.seed = l_seed;
            emit(l_out, app::run_labspace(cfg, l_system, l_leaves, l_repeats, l_scopes, l_labels));
            return 0;
        }
    } catch (const Error& e) {
        return fail(e.kind(), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
