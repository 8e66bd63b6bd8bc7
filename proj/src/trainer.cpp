#include "speckg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace speckg {

void TrainConfig::validate() const {
    if (warmup_epochs > max_epochs) {
        throw std::invalid_argument("config: warmup_epochs " + std::to_string(warmup_epochs) +
                                    " exceeds max_epochs " + std::to_string(max_epochs));
    }
    if (batch_size == 0 || dim == 0 || layers == 0 || k_unlabeled == 0 || top_m == 0) {
        throw std::invalid_argument("config: batch_size, dim, layers, k_unlabeled and top_m must "
                                    "be positive");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw std::invalid_argument("config: dropout " + std::to_string(dropout) +
                                    " outside [0, 1)");
    }
    if (learning_rate <= 0.0) {
        throw std::invalid_argument("config: learning_rate must be positive");
    }
    if (alpha < 0.0 || alpha >= 1.0) {
        throw std::invalid_argument("config: alpha " + std::to_string(alpha) +
                                    " outside [0, 1); set it explicitly");
    }
    if (beta < 0.0 || beta >= 1.0) {
        throw std::invalid_argument("config: beta " + std::to_string(beta) +
                                    " outside [0, 1); set it explicitly");
    }
    if (exploration_fraction < 0.0 || exploration_fraction > 1.0) {
        throw std::invalid_argument("config: exploration_fraction outside [0, 1]");
    }
    if (resolved_pool_size() < k_unlabeled) {
        throw std::invalid_argument("config: candidate_pool_size " +
                                    std::to_string(resolved_pool_size()) + " smaller than K " +
                                    std::to_string(k_unlabeled));
    }
}

std::vector<Triple> resample_unlabeled(const std::vector<Triple>& candidates,
                                       std::span<const double> posteriors, std::size_t k,
                                       double exploration_fraction, Rng& rng) {
    if (candidates.size() < k) {
        throw std::runtime_error("resample_unlabeled: pool of " +
                                 std::to_string(candidates.size()) + " smaller than K " +
                                 std::to_string(k));
    }
    if (posteriors.size() != candidates.size()) {
        throw std::invalid_argument("resample_unlabeled: posterior count mismatch");
    }
    const auto n_top = static_cast<std::size_t>(
        std::ceil((1.0 - exploration_fraction) * static_cast<double>(k)));
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (posteriors[a] != posteriors[b]) return posteriors[a] > posteriors[b];
        return a < b;
    });
    std::vector<Triple> picked;
    picked.reserve(k);
    for (std::size_t i = 0; i < n_top; ++i) picked.push_back(candidates[order[i]]);
    if (n_top < k) {
        std::vector<std::size_t> rest(order.begin() + static_cast<long>(n_top), order.end());
        std::sort(rest.begin(), rest.end()); // uniform draw from the remainder, index order
        rng.shuffle(rest);
        for (std::size_t i = 0; i < k - n_top; ++i) picked.push_back(candidates[rest[i]]);
    }
    return picked;
}

Trainer::Trainer(std::vector<Triple> train, std::vector<Triple> valid, Vocab vocab,
                 TrainConfig config)
    : train_(std::move(train)), valid_(std::move(valid)), vocab_(std::move(vocab)),
      cfg_(config), master_(config.seed), adam_w_labeled_("w_labeled", 0, {}),
      adam_w_unlabeled_("w_unlabeled", 0, {}) {
    cfg_.validate();
    if (train_.empty()) throw std::invalid_argument("Trainer: empty training set");
    for (const Triple& t : train_) train_index_.insert(t);
    valid_filter_ = train_index_;
    for (const Triple& t : valid_) valid_filter_.insert(t);
}

void Trainer::init_state() {
    const std::size_t n = train_.size();
    Rng init_rng = master_.substream("init");
    params_ = ModelParams::init(vocab_.entity_count(), vocab_.relation_count(), cfg_.dim,
                                cfg_.layers, init_rng);
    Rng posterior_rng = master_.substream("posterior-init");
    table_ = PosteriorTable::init(n, cfg_.k_unlabeled, posterior_rng);

    pool_.k = cfg_.k_unlabeled;
    pool_.slots.clear();
    pool_.slots.reserve(n * cfg_.k_unlabeled);
    for (std::size_t i = 0; i < n; ++i) {
        const auto picked = corrupt(train_[i], vocab_, cfg_.k_unlabeled, train_index_,
                                    master_.substream("pool-init", i).seed());
        pool_.slots.insert(pool_.slots.end(), picked.begin(), picked.end());
    }

    // Bootstrap: uniform-posterior neighbor sets, one refresh from the
    // freshly initialized model, then the neighbor sets the warmup freezes.
    const std::vector<double> uniform(n, 0.5);
    neighbors_ = build_neighbor_sets(train_, vocab_.entity_count(), vocab_.relation_count(),
                                     uniform, cfg_.top_m);
    const EncodedModel encoded = encode_all(params_, neighbors_);
    refresh_posteriors(table_, encoded, train_, pool_.slots, cfg_.alpha, cfg_.beta);
    rebuild_neighbors();

    AdamConfig adam_cfg;
    adam_cfg.learning_rate = cfg_.learning_rate;
    adam_model_.clear();
    for (auto& [name, tensor] : params_.named()) {
        adam_model_.emplace_back(name, tensor->numel(), adam_cfg);
    }
    adam_w_labeled_ = AdamState("w_labeled_logits", table_.w_labeled_logits.numel(), adam_cfg);
    adam_w_unlabeled_ =
        AdamState("w_unlabeled_logits", table_.w_unlabeled_logits.numel(), adam_cfg);

    valid_queries_ = make_queries(valid_);
    if (valid_queries_.size() > cfg_.valid_sample_cap && cfg_.valid_sample_cap > 0) {
        Rng sample_rng = master_.substream("valid-sample");
        sample_rng.shuffle(valid_queries_);
        valid_queries_.resize(cfg_.valid_sample_cap);
    }
    pool_candidates_scored_ = 0;
}

void Trainer::rebuild_neighbors() {
    neighbors_ = build_neighbor_sets(train_, vocab_.entity_count(), vocab_.relation_count(),
                                     table_.wt_labeled, cfg_.top_m);
}

void Trainer::resample_pool(std::size_t epoch, const EncodedModel& encoded) {
    const std::size_t n = train_.size();
    const std::size_t pool_size = cfg_.resolved_pool_size();
    std::vector<Triple> new_slots;
    new_slots.reserve(n * cfg_.k_unlabeled);
    std::vector<double> cand_posterior;
    std::unordered_map<Triple, std::size_t, TripleHash> old_slot_of;

    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t idx = static_cast<std::uint64_t>(epoch) * n + i;
        const auto candidates = corrupt_up_to(train_[i], vocab_, pool_size, train_index_,
                                              master_.substream("pool", idx).seed());
        if (candidates.size() < cfg_.k_unlabeled) {
            throw std::runtime_error("resample: pool of " + std::to_string(candidates.size()) +
                                     " smaller than K for labeled triple " + std::to_string(i));
        }
        cand_posterior.resize(candidates.size());
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const double phi1_u = clamp_prob(1.0 - collection_prob(encoded.psi1(candidates[c])));
            const double phi0_u = clamp_prob(1.0 - collection_prob(encoded.psi0(candidates[c])));
            cand_posterior[c] = posterior_unlabeled(phi1_u, phi0_u, cfg_.alpha);
        }
        pool_candidates_scored_ += candidates.size();
        Rng pick_rng = master_.substream("resample", idx);
        const auto picked = resample_unlabeled(candidates, cand_posterior, cfg_.k_unlabeled,
                                               cfg_.exploration_fraction, pick_rng);

        // Map the chosen candidates back to their pool posterior.
        std::unordered_map<Triple, double, TripleHash> posterior_of;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            posterior_of.emplace(candidates[c], cand_posterior[c]);
        }
        // Snapshot this triple's old slots before overwriting them.
        std::vector<double> old_logits(cfg_.k_unlabeled);
        old_slot_of.clear();
        for (std::size_t kk = 0; kk < cfg_.k_unlabeled; ++kk) {
            old_logits[kk] = table_.w_unlabeled_logits.data[i * cfg_.k_unlabeled + kk];
            old_slot_of.emplace(pool_.slots[i * cfg_.k_unlabeled + kk], kk);
        }
        for (std::size_t kk = 0; kk < cfg_.k_unlabeled; ++kk) {
            const std::size_t slot = i * cfg_.k_unlabeled + kk;
            const Triple& t = picked[kk];
            const double wt = posterior_of.at(t);
            // Retained candidates keep their free logit; new ones start at
            // the model's current posterior.
            const auto old_it = old_slot_of.find(t);
            if (old_it != old_slot_of.end()) {
                table_.w_unlabeled_logits.data[slot] = old_logits[old_it->second];
            } else {
                const double p = clamp_prob(wt);
                table_.w_unlabeled_logits.data[slot] = std::log(p / (1.0 - p));
            }
            table_.wt_unlabeled[slot] = wt;
            new_slots.push_back(t);
        }
    }
    pool_.slots = std::move(new_slots);
}

std::pair<double, double> Trainer::validation_metrics(const EncodedModel& model) const {
    if (valid_queries_.empty()) return {0.0, 0.0};
    const Scorer scorer = [&model](const Triple& t) { return model.psi1(t); };
    const auto ranks = rank_queries(valid_queries_, scorer,
                                    static_cast<std::int32_t>(vocab_.entity_count()), valid_filter_);
    const std::size_t ks[] = {10};
    const MetricsReport report = compute_metrics(ranks, ks);
    return {report.mrr, report.hits_at(10)};
}

double Trainer::run_batch(std::span<const std::size_t> batch, std::size_t epoch,
                          std::size_t batch_idx, EpochMetrics& sums) {
    Tape tape;
    const std::uint64_t drop_idx = (static_cast<std::uint64_t>(epoch) << 24) | batch_idx;
    TapedEncoder encoder(tape, params_, neighbors_, Mode::kTrain, cfg_.dropout,
                         master_.substream("dropout", drop_idx));
    const NodeId wl_leaf = tape.leaf(table_.w_labeled_logits, true);
    const NodeId wu_leaf = tape.leaf(table_.w_unlabeled_logits, true);

    BatchScoreNodes scores;
    scores.psi1_labeled.reserve(batch.size());
    scores.psi0_labeled.reserve(batch.size());
    scores.psi1_unlabeled.reserve(batch.size() * cfg_.k_unlabeled);
    scores.psi0_unlabeled.reserve(batch.size() * cfg_.k_unlabeled);
    for (const std::size_t i : batch) {
        const auto [p1, p0] = encoder.score(train_[i]);
        scores.psi1_labeled.push_back(p1);
        scores.psi0_labeled.push_back(p0);
        for (std::size_t kk = 0; kk < cfg_.k_unlabeled; ++kk) {
            const auto [u1, u0] = encoder.score(pool_.slots[i * cfg_.k_unlabeled + kk]);
            scores.psi1_unlabeled.push_back(u1);
            scores.psi0_unlabeled.push_back(u0);
        }
    }

    const LossBuild loss =
        build_batch_loss(tape, wl_leaf, wu_leaf, batch, cfg_.k_unlabeled, scores,
                         table_.wt_labeled, table_.wt_unlabeled, cfg_.lambda_kl, cfg_.lambda_reg);
    if (!std::isfinite(loss.total_value)) return loss.total_value;

    tape.backward(loss.total);

    const auto named = params_.named();
    const ParamBinding& bind = encoder.binding();
    const NodeId bound[] = {bind.entity_emb,   bind.relation_emb, bind.attention,
                            bind.transform,    bind.head_pos.w1,  bind.head_pos.b1,
                            bind.head_pos.w2,  bind.head_pos.b2,  bind.head_neg.w1,
                            bind.head_neg.b1,  bind.head_neg.w2,  bind.head_neg.b2};
    for (std::size_t p = 0; p < named.size(); ++p) {
        adam_step(*named[p].second, tape.grad(bound[p]), adam_model_[p]);
    }
    adam_step(table_.w_labeled_logits, tape.grad(wl_leaf), adam_w_labeled_);
    adam_step(table_.w_unlabeled_logits, tape.grad(wu_leaf), adam_w_unlabeled_);

    const double weight = static_cast<double>(batch.size());
    sums.loss_triple += loss.triple_value * weight;
    sums.loss_kl += loss.kl_value * weight;
    sums.loss_reg += loss.reg_value * weight;
    return loss.total_value;
}

TrainResult Trainer::run() {
    init_state();

    TrainResult result;
    result.best_params = params_;
    const EncodedModel init_encoded = encode_all(params_, neighbors_);
    result.best_entity_repr = init_encoded.entity_repr;
    result.best_epoch = 0;
    result.best_valid_mrr = 0.0;

    std::vector<std::size_t> order(train_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    EncodedModel encoded = init_encoded;
    bool have_best = false;

    for (std::size_t epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
        if (epoch > cfg_.warmup_epochs) {
            resample_pool(epoch, encoded);
            rebuild_neighbors();
        }

        Rng shuffle_rng = master_.substream("shuffle", epoch);
        shuffle_rng.shuffle(order);

        EpochMetrics metrics;
        metrics.epoch = epoch;
        bool finite = true;
        std::size_t batch_idx = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
            const std::size_t len = std::min(cfg_.batch_size, order.size() - start);
            const std::span<const std::size_t> batch(order.data() + start, len);
            const double total = run_batch(batch, epoch, batch_idx++, metrics);
            if (!std::isfinite(total)) {
                finite = false;
                break;
            }
        }
        if (!finite) {
            result.diverged = true;
            result.last_finite_epoch = epoch - 1;
            break;
        }
        const double denom = static_cast<double>(train_.size());
        metrics.loss_triple /= denom;
        metrics.loss_kl /= denom;
        metrics.loss_reg /= denom;

        encoded = encode_all(params_, neighbors_);
        refresh_posteriors(table_, encoded, train_, pool_.slots, cfg_.alpha, cfg_.beta);

        const auto [mrr, hits10] = validation_metrics(encoded);
        metrics.valid_mrr = mrr;
        metrics.valid_hits10 = hits10;
        result.history.push_back(metrics);
        result.last_finite_epoch = epoch;

        if (!have_best || mrr > result.best_valid_mrr) {
            have_best = true;
            result.best_valid_mrr = mrr;
            result.best_epoch = epoch;
            result.best_params = params_;
            result.best_entity_repr = encoded.entity_repr;
        }
    }

    result.final_params = params_;
    result.posteriors = table_;
    result.final_neighbors = neighbors_;
    result.final_pool = pool_;
    result.pool_candidates_scored = pool_candidates_scored_;
    return result;
}

std::string history_csv(const std::vector<EpochMetrics>& history,
                        const std::vector<std::string>& header_lines) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& h : header_lines) os << "# " << h << '\n';
    os << "epoch,loss_triple,loss_kl,loss_reg,valid_mrr,valid_hits10\n";
    for (const EpochMetrics& m : history) {
        os << m.epoch << ',' << m.loss_triple << ',' << m.loss_kl << ',' << m.loss_reg << ','
           << m.valid_mrr << ',' << m.valid_hits10 << '\n';
    }
    return os.str();
}

} // namespace speckg
