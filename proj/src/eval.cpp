#include "speckg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace speckg {

std::size_t filtered_rank(const RankQuery& query, const Scorer& scorer, std::int32_t n_entities,
                          const TripleSet& filter, TiePolicy ties) {
    const bool head_masked = query.masked == RankQuery::Slot::kHead;
    const std::int32_t true_entity = head_masked ? query.triple.head : query.triple.tail;
    if (true_entity < 0 || true_entity >= n_entities) {
        throw std::invalid_argument("filtered_rank: true answer outside the entity range");
    }
    Triple candidate = query.triple;
    const double true_score = scorer(query.triple);
    std::size_t greater = 0;
    std::size_t equal = 0;
    for (std::int32_t e = 0; e < n_entities; ++e) {
        if (e == true_entity) continue;
        if (head_masked) candidate.head = e;
        else candidate.tail = e;
        if (filter.count(candidate)) continue;
        const double s = scorer(candidate);
        if (s > true_score) ++greater;
        else if (s == true_score) ++equal;
    }
    return 1 + greater + (ties == TiePolicy::kPessimistic ? equal : 0);
}

MetricsReport compute_metrics(const std::vector<std::size_t>& ranks,
                              std::span<const std::size_t> ks) {
    if (ranks.empty()) throw std::invalid_argument("compute_metrics: empty rank list");
    MetricsReport report;
    report.query_count = ranks.size();
    double acc = 0.0;
    for (std::size_t r : ranks) {
        if (r == 0) throw std::invalid_argument("compute_metrics: rank 0 is invalid");
        acc += 1.0 / static_cast<double>(r);
    }
    report.mrr = acc / static_cast<double>(ranks.size());
    for (std::size_t k : ks) {
        std::size_t within = 0;
        for (std::size_t r : ranks) within += r <= k;
        report.hits.emplace_back(k, static_cast<double>(within) / static_cast<double>(ranks.size()));
    }
    return report;
}

double MetricsReport::hits_at(std::size_t k) const {
    for (const auto& [kk, v] : hits) {
        if (kk == k) return v;
    }
    throw std::invalid_argument("MetricsReport: hits@" + std::to_string(k) + " not computed");
}

std::vector<RankQuery> make_queries(const std::vector<Triple>& triples) {
    std::vector<RankQuery> queries;
    queries.reserve(2 * triples.size());
    for (const Triple& t : triples) {
        queries.push_back({t, RankQuery::Slot::kHead});
        queries.push_back({t, RankQuery::Slot::kTail});
    }
    return queries;
}

std::vector<std::size_t> rank_queries(const std::vector<RankQuery>& queries, const Scorer& scorer,
                                      std::int32_t n_entities, const TripleSet& filter,
                                      TiePolicy ties) {
    std::vector<std::size_t> ranks;
    ranks.reserve(queries.size());
    for (const RankQuery& q : queries) ranks.push_back(filtered_rank(q, scorer, n_entities, filter, ties));
    return ranks;
}

namespace {

// Mann-Whitney AUC with tie-averaged ranks: probability that a genuine
// triple carries a higher posterior than an added negative.
double ranked_auc(const std::vector<std::pair<double, bool>>& scored /* (posterior, is_genuine) */) {
    std::vector<std::size_t> order(scored.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scored[a].first < scored[b].first;
    });
    std::vector<double> rank(scored.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scored[order[j + 1]].first == scored[order[i]].first) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t p = i; p <= j; ++p) rank[order[p]] = avg;
        i = j + 1;
    }
    double genuine_rank_sum = 0.0;
    std::size_t n_genuine = 0;
    for (std::size_t p = 0; p < scored.size(); ++p) {
        if (scored[p].second) {
            genuine_rank_sum += rank[p];
            ++n_genuine;
        }
    }
    const std::size_t n_added = scored.size() - n_genuine;
    if (n_genuine == 0 || n_added == 0) return 0.0;
    const double u = genuine_rank_sum -
                     static_cast<double>(n_genuine) * (static_cast<double>(n_genuine) + 1.0) / 2.0;
    return u / (static_cast<double>(n_genuine) * static_cast<double>(n_added));
}

} // namespace

DetectionReport detection_report(const std::vector<Triple>& labeled,
                                 std::span<const double> wt_labeled, const FlipLog& flip_log,
                                 const Scorer& scorer, std::int32_t n_entities,
                                 const TripleSet& filter, std::size_t top_n) {
    if (labeled.size() != wt_labeled.size()) {
        throw std::invalid_argument("detection_report: posterior count does not match triples");
    }
    DetectionReport report;
    if (flip_log.entries.empty()) return report; // not applicable

    TripleSet added;
    std::vector<Triple> removed;
    for (const auto& e : flip_log.entries) {
        if (e.edit == Edit::kAddedNegative) added.insert(e.triple);
        else removed.push_back(e.triple);
    }

    // False-positive detection over the labeled set.
    std::vector<std::pair<double, bool>> scored;
    scored.reserve(labeled.size());
    std::size_t n_added_in_labeled = 0;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const bool is_added = added.count(labeled[i]) > 0;
        n_added_in_labeled += is_added;
        scored.emplace_back(wt_labeled[i], !is_added);
    }
    report.added_in_labeled = n_added_in_labeled;
    if (n_added_in_labeled > 0 && n_added_in_labeled < labeled.size()) {
        report.applicable = true;
        report.auc = ranked_auc(scored);
        // Flag the n lowest-posterior triples as suspected false positives.
        const std::size_t n_flag = std::min<std::size_t>(n_added_in_labeled, labeled.size());
        std::vector<std::size_t> order(labeled.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (wt_labeled[a] != wt_labeled[b]) return wt_labeled[a] < wt_labeled[b];
            return a < b;
        });
        std::size_t caught = 0;
        for (std::size_t i = 0; i < n_flag; ++i) caught += added.count(labeled[order[i]]) > 0;
        report.precision_n = n_flag;
        report.precision_at_n = static_cast<double>(caught) / static_cast<double>(n_flag);
    }

    // False-negative recovery over the removed positives.
    report.recall_n = top_n;
    report.removed_total = removed.size();
    if (!removed.empty()) {
        report.applicable = true;
        std::size_t recovered = 0;
        for (const Triple& t : removed) {
            const std::size_t tail_rank =
                filtered_rank({t, RankQuery::Slot::kTail}, scorer, n_entities, filter);
            if (tail_rank <= top_n) {
                ++recovered;
                continue;
            }
            const std::size_t head_rank =
                filtered_rank({t, RankQuery::Slot::kHead}, scorer, n_entities, filter);
            if (head_rank <= top_n) ++recovered;
        }
        report.recall_at_n = static_cast<double>(recovered) / static_cast<double>(removed.size());
    }
    return report;
}

std::string metrics_csv(const MetricsReport& report, const std::vector<std::string>& header_lines) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& h : header_lines) os << "# " << h << '\n';
    os << "metric,value\n";
    os << "mrr," << report.mrr << '\n';
    for (const auto& [k, v] : report.hits) os << "hits@" << k << ',' << v << '\n';
    os << "queries," << report.query_count << '\n';
    return os.str();
}

std::string metrics_table(const MetricsReport& report) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "metric" << "value\n";
    os << std::left << std::setw(12) << "mrr" << std::setprecision(6) << report.mrr << '\n';
    for (const auto& [k, v] : report.hits) {
        os << std::left << std::setw(12) << ("hits@" + std::to_string(k)) << std::setprecision(6)
           << v << '\n';
    }
    os << std::left << std::setw(12) << "queries" << report.query_count << '\n';
    return os.str();
}

} // namespace speckg
