#include "speckg/loss.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace speckg {

double collection_prob(double psi) {
    if (!std::isfinite(psi)) {
        throw std::invalid_argument("collection_prob: non-finite score " + std::to_string(psi));
    }
    return clamp_prob(logistic(psi));
}

double pairwise_uncollection(double psi_u, double psi_l) {
    if (!std::isfinite(psi_u) || !std::isfinite(psi_l)) {
        throw std::invalid_argument("pairwise_uncollection: non-finite score");
    }
    return clamp_prob(logistic(psi_u - psi_l));
}

double posterior_labeled(double phi1_l, double phi0_l, double beta) {
    const double num = beta * phi1_l;
    return num / (num + (1.0 - beta) * phi0_l);
}

double posterior_unlabeled(double phi1_u, double phi0_u, double alpha) {
    const double num = alpha * phi1_u;
    return num / (num + (1.0 - alpha) * phi0_u);
}

double bernoulli_kl(double w, double w_tilde) {
    const double a = clamp_prob(w);
    const double b = clamp_prob(w_tilde);
    return a * std::log(a / b) + (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
}

PosteriorTable PosteriorTable::init(std::size_t n_labeled, std::size_t k, Rng& rng) {
    if (n_labeled == 0 || k == 0) {
        throw std::invalid_argument("PosteriorTable::init: counts must be positive");
    }
    PosteriorTable t;
    t.k = k;
    t.w_labeled_logits = Tensor({n_labeled, 1});
    t.w_unlabeled_logits = Tensor({n_labeled * k, 1});
    for (double& v : t.w_labeled_logits.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : t.w_unlabeled_logits.data) v = rng.uniform(-1.0, 1.0);
    t.wt_labeled.assign(n_labeled, 0.5);
    t.wt_unlabeled.assign(n_labeled * k, 0.5);
    return t;
}

void refresh_posteriors(PosteriorTable& table, const EncodedModel& model,
                        const std::vector<Triple>& labeled, const std::vector<Triple>& slots,
                        double alpha, double beta) {
    if (labeled.size() != table.labeled_count() || slots.size() != table.slot_count()) {
        throw std::invalid_argument("refresh_posteriors: table sized for " +
                                    std::to_string(table.labeled_count()) + "/" +
                                    std::to_string(table.slot_count()) + " entries, got " +
                                    std::to_string(labeled.size()) + "/" +
                                    std::to_string(slots.size()));
    }
    std::vector<double> wt_l(labeled.size());
    std::vector<double> wt_u(slots.size());
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const double phi1 = collection_prob(model.psi1(labeled[i]));
        const double phi0 = collection_prob(model.psi0(labeled[i]));
        wt_l[i] = posterior_labeled(phi1, phi0, beta);
    }
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const double phi1_u = clamp_prob(1.0 - collection_prob(model.psi1(slots[s])));
        const double phi0_u = clamp_prob(1.0 - collection_prob(model.psi0(slots[s])));
        wt_u[s] = posterior_unlabeled(phi1_u, phi0_u, alpha);
    }
    table.wt_labeled.swap(wt_l);
    table.wt_unlabeled.swap(wt_u);
}

double triple_loss_value(std::span<const double> w_l, std::span<const double> phi1_l,
                         std::span<const double> phi0_l, std::span<const double> w_u,
                         std::span<const double> phi1_star, std::span<const double> phi0_star,
                         std::size_t k) {
    const std::size_t b = w_l.size();
    if (b == 0 || k == 0) throw std::invalid_argument("triple_loss: empty batch");
    if (phi1_l.size() != b || phi0_l.size() != b || w_u.size() != b * k ||
        phi1_star.size() != b * k || phi0_star.size() != b * k) {
        throw std::invalid_argument("triple_loss: inconsistent input sizes");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double labeled_term = w_l[i] * std::log(clamp_prob(phi1_l[i])) +
                                    (1.0 - w_l[i]) * std::log(clamp_prob(phi0_l[i]));
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t s = i * k + j;
            acc += labeled_term + w_u[s] * std::log(clamp_prob(phi1_star[s])) +
                   (1.0 - w_u[s]) * std::log(clamp_prob(phi0_star[s]));
        }
    }
    return -acc / static_cast<double>(k * b);
}

double kl_term_value(std::span<const double> w, std::span<const double> w_tilde) {
    if (w.size() != w_tilde.size() || w.empty()) {
        throw std::invalid_argument("kl_term: size mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += bernoulli_kl(w[i], w_tilde[i]);
    return acc / static_cast<double>(w.size());
}

double reg_term_value(std::span<const double> w_labeled, std::span<const double> w_unlabeled) {
    double acc = 0.0;
    double l = 0.0, u = 0.0;
    for (double v : w_labeled) l += std::abs(v);
    for (double v : w_unlabeled) u += std::abs(v);
    if (!w_labeled.empty()) acc += l / static_cast<double>(w_labeled.size());
    if (!w_unlabeled.empty()) acc += u / static_cast<double>(w_unlabeled.size());
    return acc;
}

double total_loss_value(double triple, double kl, double reg, double lambda_kl,
                        double lambda_reg) {
    if (!std::isfinite(triple)) throw std::runtime_error("total_loss: non-finite L_triple");
    if (!std::isfinite(kl)) throw std::runtime_error("total_loss: non-finite L_KL");
    if (!std::isfinite(reg)) throw std::runtime_error("total_loss: non-finite L_reg");
    return triple + lambda_kl * kl + lambda_reg * reg;
}

LossBuild build_batch_loss(Tape& tape, NodeId w_labeled_logits, NodeId w_unlabeled_logits,
                           std::span<const std::size_t> batch, std::size_t k,
                           const BatchScoreNodes& scores, std::span<const double> wt_labeled,
                           std::span<const double> wt_unlabeled, double lambda_kl,
                           double lambda_reg) {
    const std::size_t b = batch.size();
    if (b == 0 || k == 0) throw std::invalid_argument("build_batch_loss: empty batch");
    if (scores.psi1_labeled.size() != b || scores.psi0_labeled.size() != b ||
        scores.psi1_unlabeled.size() != b * k || scores.psi0_unlabeled.size() != b * k) {
        throw std::invalid_argument("build_batch_loss: score nodes do not match batch size");
    }

    std::vector<NodeId> pair_terms;
    pair_terms.reserve(b * k);
    std::vector<NodeId> w_l_nodes(b);
    std::vector<NodeId> w_u_nodes(b * k);
    std::vector<NodeId> kl_l_terms(b);
    std::vector<NodeId> kl_u_terms(b * k);

    auto kl_node = [&](NodeId w, double wt) {
        const double wt_c = clamp_prob(wt);
        const NodeId one_m = tape.one_minus(w);
        const NodeId left = tape.mul(w, tape.add_const(tape.log(w), -std::log(wt_c)));
        const NodeId right =
            tape.mul(one_m, tape.add_const(tape.log(one_m), -std::log(1.0 - wt_c)));
        return tape.add(left, right);
    };

    for (std::size_t pos = 0; pos < b; ++pos) {
        const std::size_t i = batch[pos];
        const NodeId w_l = tape.sigmoid(tape.gather_row(w_labeled_logits, i));
        w_l_nodes[pos] = w_l;
        kl_l_terms[pos] = kl_node(w_l, wt_labeled[i]);

        const NodeId phi1 =
            tape.clamp(tape.sigmoid(scores.psi1_labeled[pos]), kProbEps, 1.0 - kProbEps);
        const NodeId phi0 =
            tape.clamp(tape.sigmoid(scores.psi0_labeled[pos]), kProbEps, 1.0 - kProbEps);
        const NodeId log_phi1 = tape.log(phi1);
        const NodeId log_phi0 = tape.log(phi0);
        const NodeId labeled_term =
            tape.add(tape.mul(w_l, log_phi1), tape.mul(tape.one_minus(w_l), log_phi0));

        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t pos_s = pos * k + j;
            const std::size_t slot = i * k + j;
            const NodeId w_u = tape.sigmoid(tape.gather_row(w_unlabeled_logits, slot));
            w_u_nodes[pos_s] = w_u;
            kl_u_terms[pos_s] = kl_node(w_u, wt_unlabeled[slot]);

            const NodeId phi1_star = tape.clamp(
                tape.sigmoid(tape.sub(scores.psi1_unlabeled[pos_s], scores.psi1_labeled[pos])),
                kProbEps, 1.0 - kProbEps);
            const NodeId phi0_star = tape.clamp(
                tape.sigmoid(tape.sub(scores.psi0_unlabeled[pos_s], scores.psi0_labeled[pos])),
                kProbEps, 1.0 - kProbEps);
            const NodeId unlabeled_term = tape.add(tape.mul(w_u, tape.log(phi1_star)),
                                                   tape.mul(tape.one_minus(w_u), tape.log(phi0_star)));
            pair_terms.push_back(tape.add(labeled_term, unlabeled_term));
        }
    }

    LossBuild out;
    out.triple = tape.scale(tape.sum(tape.concat_cols(pair_terms)),
                            -1.0 / static_cast<double>(k * b));
    const NodeId kl_l = tape.mean(tape.concat_cols(kl_l_terms));
    const NodeId kl_u = tape.mean(tape.concat_cols(kl_u_terms));
    out.kl = tape.add(kl_l, kl_u);
    const NodeId reg_l =
        tape.scale(tape.l1_norm(tape.concat_cols(w_l_nodes)), 1.0 / static_cast<double>(b));
    const NodeId reg_u = tape.scale(tape.l1_norm(tape.concat_cols(w_u_nodes)),
                                    1.0 / static_cast<double>(b * k));
    out.reg = tape.add(reg_l, reg_u);
    out.total =
        tape.add(tape.add(out.triple, tape.scale(out.kl, lambda_kl)), tape.scale(out.reg, lambda_reg));

    out.triple_value = tape.value(out.triple).data[0];
    out.kl_value = tape.value(out.kl).data[0];
    out.reg_value = tape.value(out.reg).data[0];
    out.total_value =
        total_loss_value(out.triple_value, out.kl_value, out.reg_value, lambda_kl, lambda_reg);
    return out;
}

void write_posterior_dump(const std::string& path, const PosteriorTable& table,
                          const std::vector<std::string>& header_lines) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_posterior_dump: cannot open '" + path + "'");
    out.precision(17);
    for (const auto& h : header_lines) out << "# " << h << '\n';
    for (std::size_t i = 0; i < table.labeled_count(); ++i) {
        out << i << '\t' << table.w_labeled(i) << '\t' << table.wt_labeled[i] << "\tlabeled\n";
    }
    for (std::size_t s = 0; s < table.slot_count(); ++s) {
        out << s << '\t' << table.w_unlabeled(s) << '\t' << table.wt_unlabeled[s]
            << "\tunlabeled\n";
    }
    if (!out) throw std::runtime_error("write_posterior_dump: write failed for '" + path + "'");
}

std::vector<PosteriorDumpRow> read_posterior_dump(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_posterior_dump: cannot open '" + path + "'");
    std::vector<PosteriorDumpRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        PosteriorDumpRow row;
        std::string kind;
        if (!(ls >> row.id >> row.w >> row.w_tilde >> kind) ||
            (kind != "labeled" && kind != "unlabeled")) {
            throw std::runtime_error("read_posterior_dump: malformed line " +
                                     std::to_string(line_no) + " in '" + path + "'");
        }
        row.labeled = kind == "labeled";
        rows.push_back(row);
    }
    return rows;
}

} // namespace speckg
