#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "speckg/kg.hpp"

namespace speckg {

struct RankQuery {
    enum class Slot { kHead, kTail };
    Triple triple; // the known true triple
    Slot masked;
};

using Scorer = std::function<double(const Triple&)>;

enum class TiePolicy { kOptimistic, kPessimistic };

// Rank of the true answer among all entity completions, ignoring other
// known-true candidates. Optimistic ties: rank = 1 + #strictly greater;
// pessimistic additionally counts equal-scoring unfiltered candidates.
std::size_t filtered_rank(const RankQuery& query, const Scorer& scorer, std::int32_t n_entities,
                          const TripleSet& filter, TiePolicy ties = TiePolicy::kOptimistic);

struct MetricsReport {
    double mrr = 0.0;
    std::vector<std::pair<std::size_t, double>> hits; // (k, hits@k)
    std::size_t query_count = 0;

    double hits_at(std::size_t k) const;
};

MetricsReport compute_metrics(const std::vector<std::size_t>& ranks,
                              std::span<const std::size_t> ks);

// Both a head and a tail query per triple, in triple order.
std::vector<RankQuery> make_queries(const std::vector<Triple>& triples);

std::vector<std::size_t> rank_queries(const std::vector<RankQuery>& queries, const Scorer& scorer,
                                      std::int32_t n_entities, const TripleSet& filter,
                                      TiePolicy ties = TiePolicy::kOptimistic);

struct DetectionReport {
    bool applicable = false;
    // False-positive detection: labeled triples ranked ascending by
    // posterior; AUC separates added negatives from genuine triples.
    double auc = 0.0;
    double precision_at_n = 0.0;
    std::size_t precision_n = 0;
    std::size_t added_in_labeled = 0;
    // False-negative recovery: fraction of removed positives whose missing
    // entity appears in the top-n of either directional query.
    double recall_at_n = 0.0;
    std::size_t recall_n = 0;
    std::size_t removed_total = 0;
};

DetectionReport detection_report(const std::vector<Triple>& labeled,
                                 std::span<const double> wt_labeled, const FlipLog& flip_log,
                                 const Scorer& scorer, std::int32_t n_entities,
                                 const TripleSet& filter, std::size_t top_n);

std::string metrics_csv(const MetricsReport& report, const std::vector<std::string>& header_lines);
std::string metrics_table(const MetricsReport& report);

} // namespace speckg
