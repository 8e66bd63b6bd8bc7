#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "speckg/encoder.hpp"
#include "speckg/kg.hpp"
#include "speckg/rng.hpp"
#include "speckg/tensor.hpp"

namespace speckg {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double clamp_prob(double p) {
    return std::min(1.0 - kProbEps, std::max(kProbEps, p));
}

// phi_y^l(s) = sigma(psi_y(s)), clamped away from {0, 1}.
double collection_prob(double psi);

// phi_y^star(s^l, s^u) = sigma(psi_y(s^u) - psi_y(s^l)); the pairwise
// ranking measure standing in for the uncollection probability.
double pairwise_uncollection(double psi_u, double psi_l);

// Posterior that a collected triple is positive given its collection
// probabilities under each class and the true-positive ratio beta.
double posterior_labeled(double phi1_l, double phi0_l, double beta);

// Posterior that an uncollected triple is positive given its uncollection
// probabilities and the positive class prior alpha.
double posterior_unlabeled(double phi1_u, double phi0_u, double alpha);

double bernoulli_kl(double w, double w_tilde);

// Free variational parameters (stored as unconstrained logits, read through
// the logistic map) plus the cached model posteriors they are regularized
// toward. Unlabeled entries are slot-indexed: slot (i, k) lives at i*K + k.
struct PosteriorTable {
    std::size_t k = 0;
    Tensor w_labeled_logits;   // |S^L| x 1
    Tensor w_unlabeled_logits; // |S^L|*K x 1
    std::vector<double> wt_labeled;
    std::vector<double> wt_unlabeled;

    static PosteriorTable init(std::size_t n_labeled, std::size_t k, Rng& rng);

    std::size_t labeled_count() const { return w_labeled_logits.numel(); }
    std::size_t slot_count() const { return w_unlabeled_logits.numel(); }
    double w_labeled(std::size_t i) const { return logistic(w_labeled_logits.data[i]); }
    double w_unlabeled(std::size_t slot) const { return logistic(w_unlabeled_logits.data[slot]); }
};

// Recomputes both cached posterior tables from eval-mode scores and
// replaces them atomically. Idempotent for fixed parameters.
void refresh_posteriors(PosteriorTable& table, const EncodedModel& model,
                        const std::vector<Triple>& labeled, const std::vector<Triple>& slots,
                        double alpha, double beta);

// --- plain scalar loss terms (eval/inspection path and contract surface) ---

// Eq-literal batch loss: the labeled term repeats inside the K-wide inner
// sum, and the double sum is normalized by K*B.
double triple_loss_value(std::span<const double> w_l, std::span<const double> phi1_l,
                         std::span<const double> phi0_l, std::span<const double> w_u,
                         std::span<const double> phi1_star, std::span<const double> phi0_star,
                         std::size_t k);

// Mean elementwise Bernoulli KL(w || w_tilde).
double kl_term_value(std::span<const double> w, std::span<const double> w_tilde);

// |W^L|_1 / count + |W^U|_1 / count over the supplied entries.
double reg_term_value(std::span<const double> w_labeled, std::span<const double> w_unlabeled);

double total_loss_value(double triple, double kl, double reg, double lambda_kl, double lambda_reg);

// --- taped batch loss ---

struct BatchScoreNodes {
    std::vector<NodeId> psi1_labeled; // one per batch entry
    std::vector<NodeId> psi0_labeled;
    std::vector<NodeId> psi1_unlabeled; // b*K + k
    std::vector<NodeId> psi0_unlabeled;
};

struct LossBuild {
    NodeId triple = kNoNode;
    NodeId kl = kNoNode;
    NodeId reg = kNoNode;
    NodeId total = kNoNode;
    double triple_value = 0.0;
    double kl_value = 0.0;
    double reg_value = 0.0;
    double total_value = 0.0;
};

// Assembles L = L_triple + lambda_kl * L_KL + lambda_reg * L_reg on the
// tape. Gradients flow into the score nodes and the W logit leaves; the
// cached posteriors enter as constants (stop-gradient).
LossBuild build_batch_loss(Tape& tape, NodeId w_labeled_logits, NodeId w_unlabeled_logits,
                           std::span<const std::size_t> batch, std::size_t k,
                           const BatchScoreNodes& scores, std::span<const double> wt_labeled,
                           std::span<const double> wt_unlabeled, double lambda_kl,
                           double lambda_reg);

// Posterior dump rows: "triple_id<TAB>w<TAB>w_tilde<TAB>{labeled|unlabeled}".
void write_posterior_dump(const std::string& path, const PosteriorTable& table,
                          const std::vector<std::string>& header_lines);

struct PosteriorDumpRow {
    std::size_t id;
    double w;
    double w_tilde;
    bool labeled;
};

std::vector<PosteriorDumpRow> read_posterior_dump(const std::string& path);

} // namespace speckg
