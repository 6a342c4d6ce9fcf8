#pragma once

#include <map>
#include <vector>

#include "foam/lang.hpp"
#include "foam/world.hpp"

namespace foam {

struct EpisodeMetrics {
    int success = 0;
    int ne = 0; // graph hops from stop point to goal
    double spl = 0.0;
    double ndtw = 0.0;
    double sdtw = 0.0;
};

// NE = d(pred end, ref goal); success = NE <= d_th; SPL = success * L/max(P,L)
// with hop lengths; nDTW = exp(-DTW/( |ref| * d_th )) over node sequences with
// graph distance as ground cost; sDTW = success * nDTW.
EpisodeMetrics episode_metrics(const EnvironmentGraph& env, const Route& predicted,
                               const Route& reference, int d_th);

double dtw_cost(const EnvironmentGraph& env, std::span<const int> a, std::span<const int> b);

struct EvalResult {
    std::string split;
    int episodes = 0;
    std::vector<EpisodeMetrics> per_episode;
    double sr = 0.0;   // percent
    double spl = 0.0;  // percent
    double ne = 0.0;   // mean hops
    double ndtw = 0.0; // percent
    double sdtw = 0.0; // percent
};

EvalResult aggregate_metrics(std::string split, std::vector<EpisodeMetrics> per_episode);

// Corpus BLEU in [0, 100]: uniform 1-4 gram weights and brevity penalty. By
// default a zero n-gram precision zeroes the score; `smooth` adds one to the
// clipped counts of higher-order n-grams instead.
double corpus_bleu(const std::vector<std::vector<Instruction>>& references,
                   const std::vector<Instruction>& hypotheses, bool smooth = false);

struct LengthHistogram {
    int bucket_width = 1;
    std::map<int, int> buckets; // bucket index -> count, bucket b covers [b*w, (b+1)*w)
    int total = 0;
};

// Histogram of (reference length - hypothesis length).
LengthHistogram length_histogram(const std::vector<Instruction>& references,
                                 const std::vector<Instruction>& hypotheses, int bucket_width);

} // namespace foam
