#pragma once

#include "mad/backend.hpp"
#include "mad/baselines.hpp"
#include "mad/core.hpp"
#include "mad/orchestrator.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mad::harness {

struct DatasetRecord {
    std::string id;
    std::string question;
    AnswerLabel gold;
    std::vector<std::string> tags;
};

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path,
                  const std::vector<DatasetRecord>& records);

// Labeled questions for simulator experiments; gold answers cycle through a
// small pool so pre-debate answer distributions vary per question.
std::vector<DatasetRecord> make_synthetic_dataset(int n, std::uint64_t seed);

Question to_question(const DatasetRecord& record);

// Drops questions whose pre-debate answers are unanimous; all-wrong but
// disagreeing questions are kept.
std::vector<std::size_t> filter_dataset_indices(
    const std::vector<std::vector<AnswerLabel>>& initial_answer_sets);
std::vector<DatasetRecord> filter_dataset(
    const std::vector<DatasetRecord>& records,
    const std::vector<std::vector<AnswerLabel>>& initial_answer_sets);

// NComm counts directed context transfers under each method's counting rule;
// tokens sum input+output over every generation event including initials.
int count_ncomm(const DebateTrace& trace);
std::int64_t count_tokens(const DebateTrace& trace);

struct QuestionMetrics {
    std::string question_id;
    int ncomm = 0;
    std::int64_t tokens = 0;
    bool correct = false;
};

struct MethodReport {
    std::string method;
    std::vector<QuestionMetrics> rows;

    double mean_ncomm() const;
    std::int64_t total_tokens() const;
    double accuracy() const;  // fraction in [0,1]
};

double score_accuracy(const std::vector<QuestionMetrics>& rows);

void write_report_csv(const std::filesystem::path& path,
                      const std::vector<MethodReport>& reports);
std::vector<MethodReport> read_report_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Method dispatch

// method in {svr_mad, self_consistency, group_debate, sid_et, s2_mad,
// all_to_all}; sid_threshold applies to sid_et only.
RunResult run_method(const std::string& method, const Question& question,
                     const ExperimentConfig& config, Backend& backend,
                     const std::vector<AgentResponse>& initials,
                     double sid_threshold = 0.0);

// ---------------------------------------------------------------------------
// Signal-ranking analysis (difficulty-stratified top-1 correctness)

struct RankObservation {
    std::vector<bool> agent_correct;  // pre-debate
    std::vector<double> min_ll;
    std::vector<double> ppl;
    std::vector<double> conf;
    std::vector<double> svr;  // from the pairwise all-to-all decomposition
};

struct RankTable {
    struct Row {
        int bucket = 0;  // 1, 2, 3; 4 means "4+"
        int n_questions = 0;
        double min_ll = 0.0;  // fraction of questions with a correct top-1
        double ppl = 0.0;
        double conf = 0.0;
        double svr = 0.0;
    };
    std::vector<Row> rows;  // buckets with zero questions omitted
};

// Questions with zero correct agents are excluded. Argmax ties break to the
// lowest agent id; PPL ranks by argmin.
RankTable stratify_and_rank(const std::vector<RankObservation>& observations);

// Runs initial generation plus one pairwise-decomposed debate round per
// question (each agent receives each peer once, D = N-1) to resolve SVR.
// Unanimous questions are skipped.
std::vector<RankObservation> collect_rank_observations(
    const std::vector<Question>& questions, const ExperimentConfig& config,
    Backend& backend, int parallelism = 1);

// ---------------------------------------------------------------------------
// Acceptance-threshold sweep (posterior-signal ablation)

enum class PosteriorVariant { Svr, MinLL, PPL, Conf };

std::string to_string(PosteriorVariant v);
PosteriorVariant posterior_variant_from_string(const std::string& s);

struct SweepPoint {
    double threshold = 0.0;       // oriented: higher is always better
    double acceptance_rate = 0.0; // over questions that entered the debate loop
    std::int64_t total_tokens = 0;
    double accuracy = 0.0;
};

// Variant run: incremental-graph control flow with the posterior score replaced by
// the variant signal (SVR, or the mean post-debate signal; PPL negated so all
// thresholds are higher-is-better).
RunResult run_variant(const Question& question, const ExperimentConfig& config,
                      Backend& backend, PosteriorVariant variant, double threshold,
                      const std::vector<AgentResponse>* shared_initials = nullptr);

std::vector<SweepPoint> ablation_sweep(
    const std::vector<Question>& questions, const ExperimentConfig& config,
    Backend& backend, PosteriorVariant variant, const std::vector<double>& thresholds,
    const std::vector<std::vector<AgentResponse>>* shared_initials = nullptr,
    int parallelism = 1);

void write_sweep_tsv(const std::filesystem::path& path,
                     const std::map<std::string, std::vector<SweepPoint>>& curves);

// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, int parallelism,
                  const std::function<void(std::size_t)>& fn);

}  // namespace mad::harness
