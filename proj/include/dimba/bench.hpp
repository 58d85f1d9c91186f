#pragma once

#include <string>
#include <vector>

#include "dimba/backbone.hpp"

namespace dimba {

struct FlopBreakdown {
    double attention = 0, mamba = 0, mlp = 0, other = 0, total = 0;
};

// Closed-form per-forward FLOP model; L may be off the config's native
// sequence length (treated as a free variable).
FlopBreakdown flops(const ModelConfig& c, double L);

// Instrumented multiply-add counter walking the scan loops; calibrates the
// c_scan constant used by the closed forms.
long long instrumented_scan_flops(int L, int H, int N);
double scan_cost_constant();

// Modeled per-forward state footprint: L^2 scores per attention sublayer
// vs the O(H_inner * N) recurrent state per Mamba sublayer, in bytes.
double state_footprint_bytes(const ModelConfig& c, double L);

// Smallest L where the pure-attention config's FLOP total exceeds the
// hybrid's, by bisection on the closed forms; -1 when no crossover in range.
double crossover_length(const ModelConfig& hybrid, const ModelConfig& pure, double lo = 4,
                        double hi = 1e7);

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys);

struct ThroughputRow {
    std::string config_id;
    int L = 0;
    double tokens_per_sec_median = 0, tokens_per_sec_p10 = 0, tokens_per_sec_p90 = 0;
    double modeled_state_bytes = 0;
    bool oom = false;
};

// mode: "forward" or "train_step". Warmup reps (3) are discarded.
// Out-of-memory at a grid point produces a sentinel row and the run continues.
std::vector<ThroughputRow> measure_throughput(const ModelConfig& c, const std::vector<int>& L_grid,
                                              int reps, const std::string& mode);

struct RatioRow {
    int ratio_k = -1;  // -1 = pure-attention control
    int n_blocks = 0;
    int L = 0;
    FlopBreakdown fl;
    double state_bytes = 0;
    double tokens_per_sec = 0;
};

struct RatioReport {
    std::vector<RatioRow> rows;
    double crossover = -1;
};

// Fixed total mixer-sublayer budget across ratios; each K uses
// total_mixers/(K+1) blocks, the control uses total_mixers attention-only
// blocks. Writes a combined CSV when out_csv is nonempty.
RatioReport compare_ratios(const std::vector<int>& k_list, const std::vector<int>& L_grid,
                           int total_mixers, int hidden, int reps, const std::string& out_csv);

// Serial reference vs chunked OpenMP scan kernel microbenchmark.
struct ScanBenchRow {
    int L = 0;
    double sequential_ms = 0, chunked_ms = 0, max_rel_err = 0;
};
std::vector<ScanBenchRow> bench_scan_kernels(const std::vector<int>& L_grid, int H, int N,
                                             int chunk, int reps);

void write_throughput_csv(const std::vector<ThroughputRow>& rows, const std::string& path,
                          int threads);

}  // namespace dimba
