#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "speckg/adam.hpp"
#include "speckg/encoder.hpp"
#include "speckg/eval.hpp"
#include "speckg/kg.hpp"
#include "speckg/loss.hpp"

namespace speckg {

struct TrainConfig {
    std::size_t max_epochs = 200;
    std::size_t warmup_epochs = 50; // self-training disabled during warmup
    std::size_t batch_size = 256;
    std::size_t dim = 128;
    std::size_t layers = 1;
    double dropout = 0.5;
    std::size_t k_unlabeled = 10;
    double learning_rate = 0.01;
    double alpha = -1.0; // positive class prior; required, no default
    double beta = -1.0;  // true positive ratio; required, no default
    std::size_t top_m = 32;
    double lambda_kl = 1.0;
    double lambda_reg = 1.0;
    std::uint64_t seed = 42;
    std::size_t candidate_pool_size = 0; // 0 resolves to 4 * k_unlabeled
    double exploration_fraction = 0.2;
    std::size_t valid_sample_cap = 2000;

    std::size_t resolved_pool_size() const {
        return candidate_pool_size == 0 ? 4 * k_unlabeled : candidate_pool_size;
    }
    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss_triple = 0.0;
    double loss_kl = 0.0;
    double loss_reg = 0.0;
    double valid_mrr = 0.0;
    double valid_hits10 = 0.0;
};

// K unlabeled slots per labeled triple, flattened as i*K + k.
struct UnlabeledPool {
    std::size_t k = 0;
    std::vector<Triple> slots;

    std::span<const Triple> for_labeled(std::size_t i) const {
        return {slots.data() + i * k, k};
    }
};

struct TrainResult {
    ModelParams best_params;
    std::vector<double> best_entity_repr;
    std::size_t best_epoch = 0; // 1-based; 0 means the initialized model
    double best_valid_mrr = 0.0;
    std::vector<EpochMetrics> history;
    ModelParams final_params;
    PosteriorTable posteriors; // final tables
    NeighborSets final_neighbors;
    UnlabeledPool final_pool;
    bool diverged = false;
    std::size_t last_finite_epoch = 0;
    std::size_t pool_candidates_scored = 0; // resampling cost counter
};

// Top ceil((1-exploration)*K) candidates by posterior (ties by candidate
// index), remainder drawn uniformly from the rest.
std::vector<Triple> resample_unlabeled(const std::vector<Triple>& candidates,
                                       std::span<const double> posteriors, std::size_t k,
                                       double exploration_fraction, Rng& rng);

// Runs the alternating loop: warmup, per-epoch neighbor-set reconstruction
// and unlabeled resampling past warmup, mini-batch optimization of model
// parameters and free posteriors, end-of-epoch posterior refresh, and
// validation-MRR model selection.
class Trainer {
public:
    Trainer(std::vector<Triple> train, std::vector<Triple> valid, Vocab vocab, TrainConfig config);

    TrainResult run();

    // Introspection for tests.
    const UnlabeledPool& pool() const { return pool_; }
    const NeighborSets& neighbors() const { return neighbors_; }
    const PosteriorTable& posteriors() const { return table_; }
    const std::vector<RankQuery>& valid_queries() const { return valid_queries_; }

    // Validation metrics of an arbitrary snapshot on the fixed validation
    // sample (the quantity tracked for model selection).
    std::pair<double, double> validation_metrics(const EncodedModel& model) const;

private:
    void init_state();
    void resample_pool(std::size_t epoch, const EncodedModel& encoded);
    void rebuild_neighbors();
    double run_batch(std::span<const std::size_t> batch, std::size_t epoch, std::size_t batch_idx,
                     EpochMetrics& sums);

    std::vector<Triple> train_;
    std::vector<Triple> valid_;
    Vocab vocab_;
    TrainConfig cfg_;
    TripleSet train_index_;
    TripleSet valid_filter_; // train + valid true triples

    Rng master_;
    ModelParams params_;
    PosteriorTable table_;
    NeighborSets neighbors_;
    UnlabeledPool pool_;
    std::vector<AdamState> adam_model_;
    AdamState adam_w_labeled_;
    AdamState adam_w_unlabeled_;
    std::vector<RankQuery> valid_queries_;
    std::size_t pool_candidates_scored_ = 0;
};

std::string history_csv(const std::vector<EpochMetrics>& history,
                        const std::vector<std::string>& header_lines);

} // namespace speckg
