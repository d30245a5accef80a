#pragma once

#include "plbk/model.hpp"
#include "plbk/noising.hpp"
#include "plbk/sampler.hpp"
#include "plbk/tokenizer.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace plbk::training {

enum class Mode { pretrain, finetune_generation, finetune_classification };

const char* mode_name(Mode mode);

struct TrainConfig {
    Mode mode = Mode::pretrain;
    int64_t total_steps = 300;
    int64_t warmup_steps = 0;
    double peak_lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-6;
    int64_t batch_size = 8;
    uint64_t seed = 1;
    // pre-training dropout schedule: start value, then (fraction, value)
    // breakpoints; fine-tuning holds dropout_start throughout
    double dropout_start = 0.1;
    std::vector<std::pair<double, double>> dropout_points = {{0.5, 0.05}, {0.8, 0.0}};
    int64_t max_seq_len = 512;
    int64_t checkpoint_every = 100;
    int64_t eval_every = 50;
    int64_t log_every = 10;

    void validate() const;
};

// Linear ramp 0 -> peak over warmup (peak at step 0 when warmup is 0),
// then linear decay to 0 at total_steps.
double lr_at(int64_t step, const TrainConfig& config);

// Piecewise-constant, right-continuous at the breakpoints.
double dropout_at(int64_t step, const TrainConfig& config);

struct AdamState {
    int64_t step = 0;
    model::ParametersF m;
    model::ParametersF v;

    static AdamState make(const model::ModelConfig& config);
};

// Bias-corrected Adam over every parameter tensor. A non-finite gradient
// aborts with the offending tensor's name.
void adam_step(model::ParametersF& params, const model::ParametersF& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

// encoder = encode(source); decoder = [<target_lang>] ++ encode(target);
// target = encode(target) ++ [eos]
struct GenerationRows {
    std::vector<int> enc, dec, tgt;
};
GenerationRows build_generation_example(const std::string& source_text,
                                        const std::string& target_text,
                                        const std::string& source_lang,
                                        const std::string& target_lang, const Vocabulary& vocab,
                                        int64_t max_positions);

// single: a ++ [eos]; pair: a ++ [eos] ++ b ++ [eos]. The trailing eos is
// the classification readout anchor and always comes last.
std::vector<int> build_classification_example(const std::string& text_a,
                                              const std::optional<std::string>& text_b,
                                              const Vocabulary& vocab);

// Strictly-greater argmax over (step, metric); ties keep the earlier step.
class BestTracker {
public:
    bool update(int64_t step, double metric);
    double best_metric() const { return best_metric_; }
    int64_t best_step() const { return best_step_; }

private:
    double best_metric_ = -1e300;
    int64_t best_step_ = -1;
};

struct StepLog {
    int64_t step;
    double loss, lr, dropout;
};

struct PretrainResult {
    model::ParametersF params;
    std::vector<StepLog> log;
    std::string checkpoint_path; // empty when out_dir is empty
};

// total_steps of (sample batch -> corrupt -> loss/grads -> adam) with the
// scheduled lr and dropout. out_dir (optional) receives the JSONL log and
// periodic checkpoints; resume restores params, moments, rng streams and
// the step counter from a previous run's out_dir. halt_after_steps > 0
// interrupts the run after that many steps (checkpointing first), so a
// resumed run replays the interrupted schedule bit-exactly.
PretrainResult pretrain(const std::map<std::string, std::vector<RawInstance>>& corpora,
                        const Vocabulary& vocab, const NoiseConfig& noise,
                        const SamplingPlan& plan, const model::ModelConfig& model_config,
                        const TrainConfig& train_config, const std::string& out_dir = "",
                        bool resume = false, int64_t halt_after_steps = -1);

// Teacher-forced argmax accuracy over non-pad targets on freshly corrupted
// instances; the pre-training overfit oracle.
double denoising_token_accuracy(const model::ParametersF& params,
                                const std::map<std::string, std::vector<RawInstance>>& corpora,
                                const Vocabulary& vocab, const NoiseConfig& noise, uint64_t seed,
                                int64_t max_seq_len);

struct GenExample {
    std::string source_text, target_text;
    std::string source_lang, target_lang;
};

struct ClsExample {
    std::string text_a;
    std::optional<std::string> text_b;
    int label = 0;
};

struct GenTask {
    std::vector<GenExample> train, valid;
    std::string metric = "bleu"; // or "em"
};

struct ClsTask {
    std::vector<ClsExample> train, valid;
    int num_labels = 2;
    std::string metric = "accuracy";
};

struct ValidationPoint {
    int64_t step;
    double metric;
};

struct FinetuneResult {
    model::ParametersF best_params;
    double best_metric = 0.0;
    int64_t best_step = -1;
    std::vector<ValidationPoint> history;
    std::vector<StepLog> log;
    std::string checkpoint_path;
};

FinetuneResult finetune_generation(const GenTask& task, const Vocabulary& vocab,
                                   const model::ParametersF& init, const TrainConfig& config,
                                   const std::string& out_dir = "");

FinetuneResult finetune_classification(const ClsTask& task, const Vocabulary& vocab,
                                       const model::ParametersF& init, const TrainConfig& config,
                                       const std::string& out_dir = "");

// Greedy decodes of each source, as text.
std::vector<std::string> decode_generation(const model::ParametersF& params,
                                           const Vocabulary& vocab,
                                           const std::vector<GenExample>& examples,
                                           int beam_size = 1);

double evaluate_generation_metric(const model::ParametersF& params, const Vocabulary& vocab,
                                  const std::vector<GenExample>& examples,
                                  const std::string& metric);

double evaluate_classification_accuracy(const model::ParametersF& params, const Vocabulary& vocab,
                                        const std::vector<ClsExample>& examples);

} // namespace plbk::training
