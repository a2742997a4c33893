#pragma once

#include "seqdec/beam_search.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace seqdec::cli {

/// Runs one command line (without the program name). Returns the exit code:
/// 0 success, 1 failed check, 2 configuration error, 3 input-format error,
/// 4 infeasible request.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct BenchSpec {
  int vocab_size = 1000;
  int frames = 100;
  int beam_size = 8;
  int repeats = 10;
  std::uint64_t seed = 0;
};

struct TimingStats {
  double mean_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
};

struct BenchReport {
  BenchSpec spec;
  TimingStats sequential;
  TimingStats batched;
  bool equal = false;
  double speedup = 0;  // sequential / batched mean; only meaningful when equal
};

/// `corrupt` perturbs the batched result before comparison; tests use it to
/// exercise the inequality path.
BenchReport run_bench(const BenchSpec& spec, bool corrupt = false);
std::string bench_report_json(const BenchReport& report);
int bench_exit_code(const BenchReport& report);

TimingStats timing_stats(std::vector<double> samples_ms);

}  // namespace seqdec::cli
