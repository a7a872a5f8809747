#include "mad/harness.hpp"

#include "mad/errors.hpp"
#include "mad/rng.hpp"
#include "mad/signals.hpp"
#include "mad/trace_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace mad::harness {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Datasets

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset: " + path.string());
    std::vector<DatasetRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("invalid dataset JSON: ") + e.what(), line_no);
        }
        DatasetRecord rec;
        try {
            rec.id = j.at("id").get<std::string>();
            rec.question = j.at("question").get<std::string>();
            rec.gold = canonicalize(j.at("answer").get<std::string>());
            if (j.contains("tags")) rec.tags = j.at("tags").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad dataset record: ") + e.what(), line_no);
        }
        if (rec.id.empty() || rec.question.empty()) {
            throw ParseError("dataset record needs non-empty id and question", line_no);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void save_dataset(const std::filesystem::path& path,
                  const std::vector<DatasetRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError("cannot write dataset: " + path.string());
    for (const auto& rec : records) {
        json j{{"id", rec.id}, {"question", rec.question}, {"answer", rec.gold.raw}};
        if (!rec.tags.empty()) j["tags"] = rec.tags;
        out << j.dump() << "\n";
    }
}

std::vector<DatasetRecord> make_synthetic_dataset(int n, std::uint64_t seed) {
    std::vector<DatasetRecord> records;
    records.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        DatasetRecord rec;
        char id[32];
        std::snprintf(id, sizeof(id), "q%06d", i);
        rec.id = id;
        rec.question = "Synthetic question " + std::to_string(i) + " (seed " +
                       std::to_string(seed) + ")";
        rec.gold = canonicalize("gold-" + std::to_string(i % 5));
        records.push_back(std::move(rec));
    }
    return records;
}

Question to_question(const DatasetRecord& record) {
    Question q;
    q.id = record.id;
    q.text = record.question;
    q.gold_answer = record.gold;
    return q;
}

std::vector<std::size_t> filter_dataset_indices(
    const std::vector<std::vector<AnswerLabel>>& initial_answer_sets) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < initial_answer_sets.size(); ++i) {
        const auto& answers = initial_answer_sets[i];
        bool unanimous = !answers.empty();
        for (const auto& a : answers) {
            if (!answers_equal(a, answers.front())) {
                unanimous = false;
                break;
            }
        }
        if (!unanimous) kept.push_back(i);
    }
    return kept;
}

std::vector<DatasetRecord> filter_dataset(
    const std::vector<DatasetRecord>& records,
    const std::vector<std::vector<AnswerLabel>>& initial_answer_sets) {
    if (records.size() != initial_answer_sets.size()) {
        throw DatasetError("filter_dataset: answer sets do not match records");
    }
    std::vector<DatasetRecord> kept;
    for (std::size_t i : filter_dataset_indices(initial_answer_sets)) {
        kept.push_back(records[i]);
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Metrics

int count_ncomm(const DebateTrace& trace) {
    int n = 0;
    for (const auto& ev : trace.events) {
        if (ev.counted_comm) ++n;
    }
    return n;
}

std::int64_t count_tokens(const DebateTrace& trace) {
    std::int64_t total = 0;
    for (const auto& r : trace.initial_responses) {
        total += r.input_tokens + r.output_tokens;
    }
    for (const auto& ev : trace.events) {
        if (ev.carries_tokens) {
            total += ev.receiver_post.input_tokens + ev.receiver_post.output_tokens;
        }
    }
    return total;
}

double MethodReport::mean_ncomm() const {
    if (rows.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& r : rows) sum += r.ncomm;
    return sum / static_cast<double>(rows.size());
}

std::int64_t MethodReport::total_tokens() const {
    std::int64_t sum = 0;
    for (const auto& r : rows) sum += r.tokens;
    return sum;
}

double MethodReport::accuracy() const { return score_accuracy(rows); }

double score_accuracy(const std::vector<QuestionMetrics>& rows) {
    if (rows.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& r : rows) {
        if (r.correct) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

namespace {

std::string fmt(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

}  // namespace

void write_report_csv(const std::filesystem::path& path,
                      const std::vector<MethodReport>& reports) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write report: " + path.string());
    out << "method,question_id,ncomm,tokens,correct\n";
    for (const auto& rep : reports) {
        for (const auto& row : rep.rows) {
            out << rep.method << "," << row.question_id << "," << row.ncomm << ","
                << row.tokens << "," << (row.correct ? 1 : 0) << "\n";
        }
    }
    for (const auto& rep : reports) {
        out << "#aggregate," << rep.method << ",mean_ncomm=" << fmt(rep.mean_ncomm(), 4)
            << ",total_tokens_k=" << fmt(static_cast<double>(rep.total_tokens()) / 1e3, 3)
            << ",accuracy_pct=" << fmt(rep.accuracy() * 100.0, 2) << "\n";
    }
}

std::vector<MethodReport> read_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read report: " + path.string());
    std::map<std::string, MethodReport> by_method;
    std::vector<std::string> order;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("method,", 0) == 0) continue;  // header
        std::istringstream ss(line);
        std::string method, qid, ncomm, tokens, correct;
        if (!std::getline(ss, method, ',') || !std::getline(ss, qid, ',') ||
            !std::getline(ss, ncomm, ',') || !std::getline(ss, tokens, ',') ||
            !std::getline(ss, correct, ',')) {
            throw ParseError("malformed report row", line_no);
        }
        if (by_method.find(method) == by_method.end()) {
            by_method[method].method = method;
            order.push_back(method);
        }
        QuestionMetrics row;
        row.question_id = qid;
        row.ncomm = std::stoi(ncomm);
        row.tokens = std::stoll(tokens);
        row.correct = correct == "1";
        by_method[method].rows.push_back(std::move(row));
    }
    std::vector<MethodReport> reports;
    for (const auto& m : order) reports.push_back(by_method[m]);
    return reports;
}

// ---------------------------------------------------------------------------
// Method dispatch

RunResult run_method(const std::string& method, const Question& question,
                     const ExperimentConfig& config, Backend& backend,
                     const std::vector<AgentResponse>& initials, double sid_threshold) {
    if (method == "svr_mad") {
        return svr_mad(question, config, backend, &initials);
    }
    if (method == "self_consistency") {
        return baselines::self_consistency(question, initials);
    }
    if (method == "group_debate") {
        auto plan = baselines::make_grouping_plan(config.n_agents, config.seed,
                                                  question.id);
        return baselines::group_debate(question, config, backend, plan, initials);
    }
    if (method == "sid_et") {
        return baselines::sid_et(question, config, backend, sid_threshold, initials);
    }
    if (method == "s2_mad") {
        return baselines::s2_mad(question, config, backend, initials);
    }
    if (method == "all_to_all") {
        return baselines::all_to_all_mad(question, config, backend, initials);
    }
    throw ConfigError("unknown method: " + method);
}

// ---------------------------------------------------------------------------
// Signal-ranking analysis

namespace {

// Index of the best agent under a signal; ties break to the lowest id.
std::size_t top_ranked(const std::vector<double>& values, bool higher_is_better) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (higher_is_better ? values[i] > values[best] : values[i] < values[best]) {
            best = i;
        }
    }
    return best;
}

}  // namespace

RankTable stratify_and_rank(const std::vector<RankObservation>& observations) {
    struct Acc {
        int n = 0;
        int min_ll = 0, ppl = 0, conf = 0, svr = 0;
    };
    std::map<int, Acc> buckets;
    for (const auto& obs : observations) {
        int n_correct = 0;
        for (bool c : obs.agent_correct) n_correct += c ? 1 : 0;
        if (n_correct == 0) continue;  // top-ranked can never be correct
        int bucket = std::min(n_correct, 4);
        Acc& acc = buckets[bucket];
        ++acc.n;
        acc.min_ll += obs.agent_correct[top_ranked(obs.min_ll, true)] ? 1 : 0;
        acc.ppl += obs.agent_correct[top_ranked(obs.ppl, false)] ? 1 : 0;
        acc.conf += obs.agent_correct[top_ranked(obs.conf, true)] ? 1 : 0;
        acc.svr += obs.agent_correct[top_ranked(obs.svr, true)] ? 1 : 0;
    }
    RankTable table;
    for (const auto& [bucket, acc] : buckets) {
        RankTable::Row row;
        row.bucket = bucket;
        row.n_questions = acc.n;
        row.min_ll = static_cast<double>(acc.min_ll) / acc.n;
        row.ppl = static_cast<double>(acc.ppl) / acc.n;
        row.conf = static_cast<double>(acc.conf) / acc.n;
        row.svr = static_cast<double>(acc.svr) / acc.n;
        table.rows.push_back(row);
    }
    return table;
}

std::vector<RankObservation> collect_rank_observations(
    const std::vector<Question>& questions, const ExperimentConfig& config,
    Backend& backend, int parallelism) {
    std::vector<std::optional<RankObservation>> slots(questions.size());

    parallel_for(questions.size(), parallelism, [&](std::size_t qi) {
        const Question& q = questions[qi];
        auto initials = generate_initials(q, config, backend);
        const int n = static_cast<int>(initials.size());

        std::vector<AnswerLabel> answers;
        for (const auto& r : initials) answers.push_back(r.answer);
        if (max_agreement(answers) == n) return;  // unanimous, skipped

        RankObservation obs;
        for (const auto& r : initials) {
            obs.agent_correct.push_back(q.gold_answer &&
                                        answers_equal(r.answer, *q.gold_answer));
            obs.min_ll.push_back(signals::min_log_likelihood(r.token_logliks));
            obs.ppl.push_back(signals::perplexity(r.token_logliks));
            obs.conf.push_back(
                signals::prior_signal_value(r, PriorSignalKind::Conf));
        }

        // pairwise decomposition: each agent as receiver debates every peer
        // once from its initial state, so D = N - 1
        std::uint64_t event_index = 1'000'000;  // distinct seed stream per question
        for (int receiver = 0; receiver < n; ++receiver) {
            int retentions = 0, changes = 0;
            for (int sender = 0; sender < n; ++sender) {
                if (sender == receiver) continue;
                DebateContext ctx;
                ctx.receiver_history = {initials[receiver]};
                ctx.sender_outputs = {initials[sender]};
                ctx.event_index = event_index++;
                AgentResponse post = backend.debate(q, ctx);
                if (answers_equal(initials[receiver].answer, post.answer)) {
                    ++retentions;
                } else {
                    ++changes;
                }
            }
            obs.svr.push_back(signals::svr(n - 1, retentions, changes));
        }
        slots[qi] = std::move(obs);
    });

    std::vector<RankObservation> out;
    for (auto& s : slots) {
        if (s) out.push_back(std::move(*s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Acceptance-threshold sweep

std::string to_string(PosteriorVariant v) {
    switch (v) {
        case PosteriorVariant::Svr: return "svr";
        case PosteriorVariant::MinLL: return "min_ll";
        case PosteriorVariant::PPL: return "ppl";
        case PosteriorVariant::Conf: return "conf";
    }
    return "unknown";
}

PosteriorVariant posterior_variant_from_string(const std::string& s) {
    if (s == "svr") return PosteriorVariant::Svr;
    if (s == "min_ll") return PosteriorVariant::MinLL;
    if (s == "ppl") return PosteriorVariant::PPL;
    if (s == "conf") return PosteriorVariant::Conf;
    throw ConfigError("unknown posterior variant: " + s);
}

namespace {

double oriented_post_signal(const AgentResponse& resp, PosteriorVariant variant) {
    switch (variant) {
        case PosteriorVariant::MinLL:
            return signals::min_log_likelihood(resp.token_logliks);
        case PosteriorVariant::PPL:
            return -signals::perplexity(resp.token_logliks);  // higher is better
        case PosteriorVariant::Conf:
            return signals::prior_signal_value(resp, PriorSignalKind::Conf);
        case PosteriorVariant::Svr:
            break;
    }
    throw SignalUnavailable("oriented_post_signal: SVR has no per-response value");
}

// Threshold acceptance on the variant posterior, with the same incremental selection
// driven by the same value once debate evidence exists.
class VariantPolicy : public ScoringPolicy {
public:
    VariantPolicy(PosteriorVariant variant, double threshold, int n_agents)
        : variant_(variant), threshold_(threshold),
          sums_(static_cast<std::size_t>(n_agents), 0.0) {}

    void observe(const DebateEvent& event) override {
        if (variant_ == PosteriorVariant::Svr) return;
        sums_[static_cast<std::size_t>(event.receiver_id)] +=
            oriented_post_signal(event.receiver_post, variant_);
    }

    double posterior(const CorrectnessState& state) const {
        if (variant_ == PosteriorVariant::Svr) {
            return signals::svr(state.debates, state.retentions, state.changes);
        }
        return sums_[static_cast<std::size_t>(state.agent_id)] /
               static_cast<double>(state.debates);
    }

    double score(const CorrectnessState& state) const override {
        if (state.debates == 0) return state.prior;
        return posterior(state);
    }

    bool accept(const CorrectnessState& state) const override {
        return state.debates >= 1 && posterior(state) >= threshold_;
    }

private:
    PosteriorVariant variant_;
    double threshold_;
    std::vector<double> sums_;
};

}  // namespace

RunResult run_variant(const Question& question, const ExperimentConfig& config,
                      Backend& backend, PosteriorVariant variant, double threshold,
                      const std::vector<AgentResponse>* shared_initials) {
    VariantPolicy policy(variant, threshold, config.n_agents);
    auto result = run_incremental(question, config, backend, policy, shared_initials);
    result.trace.method = "variant_" + to_string(variant);
    return result;
}

std::vector<SweepPoint> ablation_sweep(
    const std::vector<Question>& questions, const ExperimentConfig& config,
    Backend& backend, PosteriorVariant variant, const std::vector<double>& thresholds,
    const std::vector<std::vector<AgentResponse>>* shared_initials, int parallelism) {
    std::vector<SweepPoint> points;
    points.reserve(thresholds.size());
    for (double threshold : thresholds) {
        std::atomic<int> accepted{0};
        std::atomic<int> debated{0};
        std::atomic<std::int64_t> tokens{0};
        std::atomic<int> correct{0};

        parallel_for(questions.size(), parallelism, [&](std::size_t qi) {
            const std::vector<AgentResponse>* initials =
                shared_initials ? &(*shared_initials)[qi] : nullptr;
            RunResult result =
                run_variant(questions[qi], config, backend, variant, threshold, initials);
            if (result.termination_reason != TerminationReason::Consensus) {
                ++debated;
                if (result.termination_reason == TerminationReason::Accepted) ++accepted;
            }
            tokens += count_tokens(result.trace);
            if (questions[qi].gold_answer &&
                answers_equal(result.final_answer, *questions[qi].gold_answer)) {
                ++correct;
            }
        });

        SweepPoint p;
        p.threshold = threshold;
        p.acceptance_rate = debated > 0
                                ? static_cast<double>(accepted) / static_cast<double>(debated)
                                : 0.0;
        p.total_tokens = tokens;
        p.accuracy = questions.empty()
                         ? 0.0
                         : static_cast<double>(correct) / static_cast<double>(questions.size());
        points.push_back(p);
    }
    return points;
}

void write_sweep_tsv(const std::filesystem::path& path,
                     const std::map<std::string, std::vector<SweepPoint>>& curves) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write sweep output: " + path.string());
    out << "variant\tthreshold\tacceptance_rate\ttotal_tokens\taccuracy\n";
    for (const auto& [variant, points] : curves) {
        for (const auto& p : points) {
            out << variant << "\t" << fmt(p.threshold, 6) << "\t"
                << fmt(p.acceptance_rate, 4) << "\t" << p.total_tokens << "\t"
                << fmt(p.accuracy, 4) << "\n";
        }
    }
}

// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, int parallelism,
                  const std::function<void(std::size_t)>& fn) {
    if (parallelism <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    int n_threads = std::min<int>(parallelism, static_cast<int>(n));
    for (int t = 0; t < n_threads; ++t) {
        workers.emplace_back([&]() {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace mad::harness
