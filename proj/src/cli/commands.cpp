#include "mad/cli.hpp"

#include "mad/backend.hpp"
#include "mad/baselines.hpp"
#include "mad/errors.hpp"
#include "mad/harness.hpp"
#include "mad/orchestrator.hpp"
#include "mad/signals.hpp"
#include "mad/trace_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace mad::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (allowed.count(key) == 0) {
            throw ConfigError("unknown config field '" + key + "' in " + where);
        }
    }
}

SimParams parse_sim_params(const json& j) {
    reject_unknown_keys(
        j,
        {"p_correct", "answer_pool_size", "p_retain_correct_vs_correct",
         "p_retain_correct_vs_wrong", "p_retain_wrong_vs_correct",
         "p_retain_wrong_vs_wrong", "adopt_prob", "prior_separation",
         "input_tokens_mean", "input_tokens_stddev", "output_tokens_mean",
         "output_tokens_stddev", "loglik_base_mean", "loglik_stddev", "loglik_tokens"},
        "backend.sim");
    SimParams p;
    p.p_correct = j.value("p_correct", p.p_correct);
    p.answer_pool_size = j.value("answer_pool_size", p.answer_pool_size);
    p.p_retain_correct_vs_correct =
        j.value("p_retain_correct_vs_correct", p.p_retain_correct_vs_correct);
    p.p_retain_correct_vs_wrong =
        j.value("p_retain_correct_vs_wrong", p.p_retain_correct_vs_wrong);
    p.p_retain_wrong_vs_correct =
        j.value("p_retain_wrong_vs_correct", p.p_retain_wrong_vs_correct);
    p.p_retain_wrong_vs_wrong =
        j.value("p_retain_wrong_vs_wrong", p.p_retain_wrong_vs_wrong);
    p.adopt_prob = j.value("adopt_prob", p.adopt_prob);
    p.prior_separation = j.value("prior_separation", p.prior_separation);
    p.input_tokens_mean = j.value("input_tokens_mean", p.input_tokens_mean);
    p.input_tokens_stddev = j.value("input_tokens_stddev", p.input_tokens_stddev);
    p.output_tokens_mean = j.value("output_tokens_mean", p.output_tokens_mean);
    p.output_tokens_stddev = j.value("output_tokens_stddev", p.output_tokens_stddev);
    p.loglik_base_mean = j.value("loglik_base_mean", p.loglik_base_mean);
    p.loglik_stddev = j.value("loglik_stddev", p.loglik_stddev);
    p.loglik_tokens = j.value("loglik_tokens", p.loglik_tokens);
    return p;
}

BackendDescriptor parse_backend(const json& j) {
    reject_unknown_keys(j, {"kind", "sim", "trace_dir", "endpoint", "model", "sampling"},
                        "backend");
    BackendDescriptor desc;
    std::string kind = j.value("kind", "simulated");
    if (kind == "simulated") {
        desc.kind = BackendDescriptor::Kind::Simulated;
    } else if (kind == "replay") {
        desc.kind = BackendDescriptor::Kind::Replay;
    } else if (kind == "http") {
        desc.kind = BackendDescriptor::Kind::Http;
    } else {
        throw ConfigError("unknown backend kind: " + kind);
    }
    if (j.contains("sim")) desc.sim = parse_sim_params(j.at("sim"));
    desc.trace_dir = j.value("trace_dir", "");
    desc.endpoint = j.value("endpoint", "");
    desc.model = j.value("model", "");
    if (j.contains("sampling")) {
        const json& s = j.at("sampling");
        reject_unknown_keys(
            s, {"temperature", "top_p", "top_k", "max_output_tokens", "reasoning_effort"},
            "backend.sampling");
        desc.sampling.temperature = s.value("temperature", desc.sampling.temperature);
        desc.sampling.top_p = s.value("top_p", desc.sampling.top_p);
        desc.sampling.top_k = s.value("top_k", desc.sampling.top_k);
        desc.sampling.max_output_tokens =
            s.value("max_output_tokens", desc.sampling.max_output_tokens);
        desc.sampling.reasoning_effort =
            s.value("reasoning_effort", desc.sampling.reasoning_effort);
    }
    return desc;
}

void validate(const CliConfig& cfg) {
    const auto& e = cfg.experiment;
    if (e.n_agents < 1) throw ConfigError("n_agents must be >= 1");
    if (e.comms_per_round < 1 || e.comms_per_round > e.n_agents - 1) {
        throw ConfigError("comms_per_round must be in [1, n_agents - 1]");
    }
    if (e.acceptance_challengers < 1 || e.acceptance_challengers > e.n_agents - 1) {
        throw ConfigError("acceptance_challengers must be in [1, n_agents - 1]");
    }
    if (e.consensus_stop_count > e.n_agents) {
        throw ConfigError("consensus_stop_count must be <= n_agents");
    }
    if (e.max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
    for (const auto& m : cfg.methods) {
        static const std::set<std::string> known{"svr_mad", "self_consistency",
                                                 "group_debate", "sid_et", "s2_mad",
                                                 "all_to_all"};
        if (known.count(m) == 0) throw ConfigError("unknown method: " + m);
    }
}

}  // namespace

CliConfig load_cli_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    reject_unknown_keys(
        j,
        {"n_agents", "comms_per_round", "acceptance_challengers", "prior_signal",
         "budget_policy", "max_rounds", "consensus_stop_count", "seed", "backend",
         "dataset", "synthetic_questions", "methods", "out", "parallelism", "sid_et",
         "sweep"},
        "config root");

    CliConfig cfg;
    auto& e = cfg.experiment;
    e.n_agents = j.value("n_agents", e.n_agents);
    e.comms_per_round = j.value("comms_per_round", e.comms_per_round);
    e.acceptance_challengers = j.value("acceptance_challengers", e.acceptance_challengers);
    if (j.contains("prior_signal")) {
        e.prior_signal = prior_signal_from_string(j.at("prior_signal").get<std::string>());
    }
    if (j.contains("budget_policy")) {
        const json& b = j.at("budget_policy");
        if (b.is_string() && b.get<std::string>() == "cluster_scaled") {
            e.budget.kind = BudgetPolicy::Kind::ClusterScaled;
        } else if (b.is_object() && b.contains("fixed_cap")) {
            reject_unknown_keys(b, {"fixed_cap"}, "budget_policy");
            e.budget.kind = BudgetPolicy::Kind::FixedCap;
            e.budget.fixed_cap = b.at("fixed_cap").get<int>();
        } else {
            throw ConfigError("budget_policy must be \"cluster_scaled\" or {\"fixed_cap\": N}");
        }
    }
    e.max_rounds = j.value("max_rounds", e.max_rounds);
    e.consensus_stop_count = j.value("consensus_stop_count", e.consensus_stop_count);
    e.seed = j.value("seed", e.seed);
    if (j.contains("backend")) e.backend = parse_backend(j.at("backend"));

    cfg.dataset_path = j.value("dataset", "");
    cfg.synthetic_questions = j.value("synthetic_questions", 0);
    if (j.contains("methods")) cfg.methods = j.at("methods").get<std::vector<std::string>>();
    cfg.out_dir = j.value("out", cfg.out_dir);
    cfg.parallelism = j.value("parallelism", cfg.parallelism);
    if (j.contains("sid_et")) {
        const json& s = j.at("sid_et");
        reject_unknown_keys(s, {"threshold", "skip_rate"}, "sid_et");
        if (s.contains("threshold")) cfg.sid_threshold = s.at("threshold").get<double>();
        cfg.sid_skip_rate = s.value("skip_rate", cfg.sid_skip_rate);
    }
    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        reject_unknown_keys(s, {"variants", "thresholds"}, "sweep");
        if (s.contains("variants")) {
            cfg.sweep_variants = s.at("variants").get<std::vector<std::string>>();
        }
        if (s.contains("thresholds")) {
            cfg.sweep_thresholds = s.at("thresholds").get<std::vector<double>>();
        }
    }
    validate(cfg);
    return cfg;
}

CliConfig apply_overrides(CliConfig config, const CliOverrides& overrides) {
    if (overrides.methods) config.methods = *overrides.methods;
    if (overrides.backend_kind) {
        const std::string& k = *overrides.backend_kind;
        if (k == "simulated") {
            config.experiment.backend.kind = BackendDescriptor::Kind::Simulated;
        } else if (k == "replay") {
            config.experiment.backend.kind = BackendDescriptor::Kind::Replay;
        } else if (k == "http") {
            config.experiment.backend.kind = BackendDescriptor::Kind::Http;
        } else {
            throw ConfigError("unknown backend kind: " + k);
        }
    }
    if (overrides.seed) config.experiment.seed = *overrides.seed;
    if (overrides.parallelism) config.parallelism = *overrides.parallelism;
    if (overrides.out_dir) config.out_dir = *overrides.out_dir;
    validate(config);
    return config;
}

namespace {

struct LoadedRun {
    CliConfig config;
    std::unique_ptr<Backend> backend;
    std::vector<Question> questions;                       // kept after filtering
    std::vector<std::vector<AgentResponse>> initials;      // aligned with questions
};

// Loads config + dataset, generates the shared pre-debate responses and
// applies the unanimity filter.
LoadedRun prepare_run(const std::string& config_path, const CliOverrides& overrides) {
    LoadedRun run;
    run.config = apply_overrides(load_cli_config(config_path), overrides);
    const auto& cfg = run.config;

    std::vector<harness::DatasetRecord> records;
    if (cfg.synthetic_questions > 0) {
        records = harness::make_synthetic_dataset(cfg.synthetic_questions,
                                                  cfg.experiment.seed);
    } else {
        if (cfg.dataset_path.empty()) throw DatasetError("no dataset configured");
        records = harness::load_dataset(cfg.dataset_path);
    }
    if (records.empty()) throw DatasetError("dataset is empty");

    run.backend = make_backend(cfg.experiment.backend, cfg.experiment.seed,
                               cfg.experiment.prior_signal == PriorSignalKind::Conf);

    std::vector<Question> all_questions;
    for (const auto& rec : records) all_questions.push_back(harness::to_question(rec));

    std::vector<std::vector<AgentResponse>> all_initials(all_questions.size());
    harness::parallel_for(all_questions.size(), cfg.parallelism, [&](std::size_t i) {
        all_initials[i] =
            generate_initials(all_questions[i], cfg.experiment, *run.backend);
    });

    std::vector<std::vector<AnswerLabel>> answer_sets;
    for (const auto& initials : all_initials) {
        std::vector<AnswerLabel> answers;
        for (const auto& r : initials) answers.push_back(r.answer);
        answer_sets.push_back(std::move(answers));
    }
    for (std::size_t i : harness::filter_dataset_indices(answer_sets)) {
        run.questions.push_back(all_questions[i]);
        run.initials.push_back(all_initials[i]);
    }
    return run;
}

double resolve_sid_threshold(const LoadedRun& run) {
    if (run.config.sid_threshold) return *run.config.sid_threshold;
    std::vector<double> max_min_lls;
    for (const auto& initials : run.initials) {
        double best = signals::min_log_likelihood(initials.front().token_logliks);
        for (const auto& r : initials) {
            best = std::max(best, signals::min_log_likelihood(r.token_logliks));
        }
        max_min_lls.push_back(best);
    }
    return baselines::sid_threshold_for_skip_rate(max_min_lls, run.config.sid_skip_rate);
}

harness::MethodReport evaluate_method(const LoadedRun& run, const std::string& method,
                                      double sid_threshold, const fs::path& trace_dir) {
    const auto& cfg = run.config;
    fs::create_directories(trace_dir);

    std::vector<harness::QuestionMetrics> rows(run.questions.size());
    harness::parallel_for(run.questions.size(), cfg.parallelism, [&](std::size_t i) {
        const Question& q = run.questions[i];
        RunResult result = harness::run_method(method, q, cfg.experiment, *run.backend,
                                               run.initials[i], sid_threshold);
        persist_trace(result.trace, trace_dir / (q.id + ".jsonl"));
        harness::QuestionMetrics row;
        row.question_id = q.id;
        row.ncomm = harness::count_ncomm(result.trace);
        row.tokens = harness::count_tokens(result.trace);
        row.correct =
            q.gold_answer && answers_equal(result.final_answer, *q.gold_answer);
        rows[i] = std::move(row);
    });

    harness::MethodReport report;
    report.method = method;
    report.rows = std::move(rows);
    return report;
}

int classify_error(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfigError;
    if (dynamic_cast<const DatasetError*>(&e)) return kExitDatasetError;
    if (dynamic_cast<const BackendError*>(&e)) return kExitBackendError;
    if (dynamic_cast<const TraceIncomplete*>(&e)) return kExitBackendError;
    if (dynamic_cast<const ParseError*>(&e)) return kExitDatasetError;
    return kExitConfigError;
}

}  // namespace

int cmd_run(const std::string& config_path, const CliOverrides& overrides) {
    try {
        LoadedRun run = prepare_run(config_path, overrides);
        const auto& cfg = run.config;
        if (cfg.methods.empty()) throw ConfigError("no methods configured");

        fs::create_directories(cfg.out_dir);
        double sid_threshold = 0.0;
        if (std::find(cfg.methods.begin(), cfg.methods.end(), "sid_et") !=
            cfg.methods.end()) {
            sid_threshold = resolve_sid_threshold(run);
        }

        std::vector<harness::MethodReport> reports;
        for (const auto& method : cfg.methods) {
            fs::path trace_dir = fs::path(cfg.out_dir) / "traces" / method;
            reports.push_back(evaluate_method(run, method, sid_threshold, trace_dir));
        }
        harness::write_report_csv(fs::path(cfg.out_dir) / "report.csv", reports);

        for (const auto& rep : reports) {
            std::cout << rep.method << ": n=" << rep.rows.size()
                      << " mean_ncomm=" << rep.mean_ncomm()
                      << " total_tokens=" << rep.total_tokens()
                      << " accuracy=" << rep.accuracy() << "\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return classify_error(e);
    }
}

namespace {

// Recomputes a trace's final answer from its events and initial responses by
// the recorded method's decision rule.
AnswerLabel replay_final_answer(const DebateTrace& trace) {
    std::vector<AnswerLabel> initial_answers;
    for (const auto& r : trace.initial_responses) initial_answers.push_back(r.answer);

    std::vector<CorrectnessState> states(trace.initial_responses.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        states[i].agent_id = static_cast<int>(i);
        states[i].current_answer = initial_answers[i];
    }
    for (const auto& ev : trace.events) {
        apply_outcome(states[static_cast<std::size_t>(ev.receiver_id)], ev);
    }

    if (trace.method == "self_consistency") return majority_answer(initial_answers);

    if (trace.termination_reason == TerminationReason::Consensus &&
        (trace.method == "svr_mad" || trace.method.rfind("variant_", 0) == 0) &&
        trace.events.empty()) {
        return majority_answer(initial_answers);  // pre-debate consensus short-circuit
    }

    if (trace.termination_reason == TerminationReason::Accepted) {
        if (!trace.accepted_agent) throw ParseError("accepted trace without agent", 0);
        const auto& st = states[static_cast<std::size_t>(*trace.accepted_agent)];
        return st.debates > 0 ? st.current_answer
                              : initial_answers[static_cast<std::size_t>(
                                    *trace.accepted_agent)];
    }

    if (trace.method == "svr_mad" || trace.method.rfind("variant_", 0) == 0) {
        return fallback_vote(states, initial_answers);
    }

    // round-based methods: majority over each agent's last answer
    std::vector<AnswerLabel> last_answers;
    for (const auto& s : states) last_answers.push_back(s.current_answer);
    return majority_answer(last_answers);
}

}  // namespace

int cmd_replay(const std::string& run_dir) {
    try {
        fs::path report_path = fs::path(run_dir) / "report.csv";
        if (!fs::exists(report_path)) {
            std::cerr << "replay: no report.csv under " << run_dir << "\n";
            return kExitDatasetError;
        }
        auto reports = harness::read_report_csv(report_path);

        std::map<std::string, std::map<std::string, harness::QuestionMetrics>> stored;
        for (const auto& rep : reports) {
            for (const auto& row : rep.rows) stored[rep.method][row.question_id] = row;
        }

        std::vector<std::string> diffs;
        fs::path traces_root = fs::path(run_dir) / "traces";
        if (!fs::exists(traces_root)) {
            std::cerr << "replay: no traces under " << run_dir << "\n";
            return kExitDatasetError;
        }
        std::size_t n_traces = 0;
        std::vector<fs::path> trace_files;
        for (const auto& entry : fs::recursive_directory_iterator(traces_root)) {
            if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
                trace_files.push_back(entry.path());
            }
        }
        std::sort(trace_files.begin(), trace_files.end());

        for (const auto& path : trace_files) {
            DebateTrace trace = load_trace(path);
            ++n_traces;
            std::string where = trace.method + "/" + trace.question_id;

            for (const auto& ev : trace.events) {
                bool expect =
                    answers_equal(ev.receiver_pre.answer, ev.receiver_post.answer);
                if (ev.retained != expect) {
                    diffs.push_back(where + ": event " +
                                    std::to_string(ev.sequence_index) +
                                    " retained flag inconsistent with answers");
                }
            }

            AnswerLabel recomputed = replay_final_answer(trace);
            if (!answers_equal(recomputed, trace.final_answer)) {
                diffs.push_back(where + ": final answer mismatch (stored '" +
                                trace.final_answer.canonical + "', recomputed '" +
                                recomputed.canonical + "')");
            }

            auto mit = stored.find(trace.method);
            if (mit == stored.end() ||
                mit->second.find(trace.question_id) == mit->second.end()) {
                diffs.push_back(where + ": missing report row");
                continue;
            }
            const auto& row = mit->second.at(trace.question_id);
            int ncomm = harness::count_ncomm(trace);
            std::int64_t tokens = harness::count_tokens(trace);
            if (ncomm != row.ncomm) {
                diffs.push_back(where + ": ncomm mismatch (report " +
                                std::to_string(row.ncomm) + ", trace " +
                                std::to_string(ncomm) + ")");
            }
            if (tokens != row.tokens) {
                diffs.push_back(where + ": token mismatch (report " +
                                std::to_string(row.tokens) + ", trace " +
                                std::to_string(tokens) + ")");
            }
        }

        if (n_traces == 0) {
            std::cerr << "replay: no trace files under " << run_dir << "\n";
            return kExitDatasetError;
        }
        if (!diffs.empty()) {
            std::cerr << "replay found " << diffs.size() << " mismatch(es):\n";
            for (const auto& d : diffs) std::cerr << "  " << d << "\n";
            return kExitReplayMismatch;
        }
        std::cout << "replay verified " << n_traces << " trace(s)\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "replay failed: " << e.what() << "\n";
        return classify_error(e);
    }
}

int cmd_tune_sid(const std::string& config_path, const std::string& reference_report,
                 const CliOverrides& overrides) {
    try {
        if (!fs::exists(reference_report)) {
            throw ConfigError("reference report not found: " + reference_report);
        }
        auto reports = harness::read_report_csv(reference_report);
        const harness::MethodReport* reference = nullptr;
        for (const auto& rep : reports) {
            if (rep.method == "svr_mad") reference = &rep;
        }
        if (reference == nullptr) {
            throw ConfigError("reference report has no svr_mad rows");
        }
        std::int64_t tok_ref = reference->total_tokens();
        double acc_ref = reference->accuracy();

        LoadedRun run = prepare_run(config_path, overrides);
        const auto& cfg = run.config;

        std::vector<double> max_min_lls;
        for (const auto& initials : run.initials) {
            double best = signals::min_log_likelihood(initials.front().token_logliks);
            for (const auto& r : initials) {
                best = std::max(best, signals::min_log_likelihood(r.token_logliks));
            }
            max_min_lls.push_back(best);
        }

        std::map<int, baselines::RateEvaluation> evaluations;
        std::cout << "rate,threshold,tokens,accuracy\n";
        for (int rate = 10; rate <= 90; rate += 10) {
            double threshold =
                baselines::sid_threshold_for_skip_rate(max_min_lls, rate);
            std::atomic<std::int64_t> tokens{0};
            std::atomic<int> correct{0};
            harness::parallel_for(run.questions.size(), cfg.parallelism,
                                  [&](std::size_t i) {
                RunResult result =
                    baselines::sid_et(run.questions[i], cfg.experiment, *run.backend,
                                      threshold, run.initials[i]);
                tokens += harness::count_tokens(result.trace);
                if (run.questions[i].gold_answer &&
                    answers_equal(result.final_answer, *run.questions[i].gold_answer)) {
                    ++correct;
                }
            });
            baselines::RateEvaluation ev;
            ev.tokens = tokens;
            ev.accuracy = run.questions.empty()
                              ? 0.0
                              : static_cast<double>(correct) /
                                    static_cast<double>(run.questions.size());
            evaluations[rate] = ev;
            std::cout << rate << "," << threshold << "," << ev.tokens << ","
                      << ev.accuracy << "\n";
        }

        int selected = baselines::tune_sid_skip_rate(evaluations, tok_ref, acc_ref);
        std::cout << "selected_skip_rate=" << selected << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "tune-sid failed: " << e.what() << "\n";
        return classify_error(e);
    }
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& variants,
              const std::vector<double>& thresholds, const CliOverrides& overrides) {
    try {
        LoadedRun run = prepare_run(config_path, overrides);
        const auto& cfg = run.config;

        std::vector<std::string> variant_names =
            variants.empty() ? cfg.sweep_variants : variants;
        std::vector<double> threshold_list =
            thresholds.empty() ? cfg.sweep_thresholds : thresholds;
        if (variant_names.empty()) throw ConfigError("sweep: no variants given");
        if (threshold_list.empty()) throw ConfigError("sweep: no thresholds given");

        std::map<std::string, std::vector<harness::SweepPoint>> curves;
        for (const auto& name : variant_names) {
            auto variant = harness::posterior_variant_from_string(name);
            curves[name] = harness::ablation_sweep(run.questions, cfg.experiment,
                                                   *run.backend, variant, threshold_list,
                                                   &run.initials, cfg.parallelism);
        }

        fs::create_directories(cfg.out_dir);
        fs::path out_path = fs::path(cfg.out_dir) / "sweep.tsv";
        harness::write_sweep_tsv(out_path, curves);
        std::cout << "wrote " << out_path.string() << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "sweep failed: " << e.what() << "\n";
        return classify_error(e);
    }
}

}  // namespace mad::cli
