#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "xdc/bss_eval.hpp"
#include "xdc/harness/config.hpp"
#include "xdc/harness/dataset.hpp"
#include "xdc/harness/models.hpp"
#include "xdc/io.hpp"
#include "xdc/signal/stft.hpp"

namespace xdc::harness {

struct ScoreRow {
  std::string utterance_id;
  std::size_t source_index = 0;
  bss::SeparationScore score;
};

struct EvalReport {
  std::vector<ScoreRow> rows;      // separated estimates, aligned to references
  std::vector<ScoreRow> baseline;  // unprocessed mixture as every estimate
  std::vector<std::vector<std::size_t>> selected;  // per utterance (X-DC only)

  std::vector<double> sdr() const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.score.sdr_db);
    return v;
  }
  std::vector<double> sdr_improvement() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < rows.size(); ++i)
      v.push_back(rows[i].score.sdr_db - baseline[i].score.sdr_db);
    return v;
  }
};

inline std::vector<std::vector<double>> resynthesize(const std::vector<signal::ComplexSpectrogram>& specs,
                                                     const Example& ex) {
  std::vector<std::vector<double>> out;
  for (const auto& s : specs) out.push_back(signal::istft(s, ex.sample_rate_hz, ex.samples).samples);
  return out;
}

// Best-permutation scores of `est` against the example's weighted sources.
inline std::vector<bss::SeparationScore> score_estimates(const std::vector<signal::ComplexSpectrogram>& est,
                                                         const Example& ex) {
  const auto refs = resynthesize(ex.sources, ex);
  const auto e = resynthesize(est, ex);
  return bss::score(bss::apply_permutation(e, bss::best_permutation_align(e, refs)), refs);
}

using Separator = std::function<Separation(const Example&)>;

inline EvalReport evaluate_examples(const std::vector<Example>& examples, const Separator& sep) {
  EvalReport r;
  for (const auto& ex : examples) {
    const auto s = sep(ex);
    const auto sc = score_estimates(s.estimates, ex);
    const auto base = score_estimates(mixture_separation(ex).estimates, ex);
    for (std::size_t i = 0; i < sc.size(); ++i) {
      r.rows.push_back({ex.id, i, sc[i]});
      r.baseline.push_back({ex.id, i, base[i]});
    }
    r.selected.push_back(s.selected);
  }
  return r;
}

inline double mean_sdr(const std::vector<Example>& examples, const Separator& sep) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& ex : examples)
    for (const auto& s : score_estimates(sep(ex).estimates, ex)) total += s.sdr_db, ++n;
  return n ? total / static_cast<double>(n) : 0.0;
}

// ---- report files -----------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string scores_csv(const std::vector<ScoreRow>& rows, const std::string& hash,
                              std::uint64_t seed) {
  std::ostringstream os;
  os << "# config_hash=" << hash << " seed=" << seed << '\n';
  os << "utterance_id,source_index,sdr,sir,sar\n";
  for (const auto& r : rows)
    os << r.utterance_id << ',' << r.source_index << ',' << fmt(r.score.sdr_db) << ','
       << fmt(r.score.sir_db) << ',' << fmt(r.score.sar_db) << '\n';
  return os.str();
}

inline json stats(const std::vector<double>& v) {
  const auto s = bss::summarize(v);
  return {{"mean", s.mean}, {"std", s.stddev}, {"median", s.median}};
}

}  // namespace detail

inline json summary_json(const EvalReport& r, const ExperimentConfig& c, const std::string& method) {
  std::vector<double> sir, sar;
  for (const auto& row : r.rows) sir.push_back(row.score.sir_db), sar.push_back(row.score.sar_db);
  std::vector<double> base;
  for (const auto& row : r.baseline) base.push_back(row.score.sdr_db);
  json j{{"method", method},
         {"config_hash", config_hash(c)},
         {"seed", c.seed},
         {"rows", r.rows.size()},
         {"sdr", detail::stats(r.sdr())},
         {"sir", detail::stats(sir)},
         {"sar", detail::stats(sar)},
         {"mixture_sdr", detail::stats(base)},
         {"sdr_improvement", detail::stats(r.sdr_improvement())}};
  if (!r.selected.empty() && !r.selected.front().empty()) j["selected_channels"] = r.selected;
  return j;
}

inline void write_eval_outputs(const EvalReport& r, const ExperimentConfig& c, const std::string& method,
                               const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto hash = config_hash(c);
  xdc::detail::write_file(dir / "scores.csv", detail::scores_csv(r.rows, hash, c.seed));
  xdc::detail::write_file(dir / "baseline_scores.csv", detail::scores_csv(r.baseline, hash, c.seed));
  xdc::detail::write_file(dir / "summary.json", summary_json(r, c, method).dump(2) + "\n");
}

}  // namespace xdc::harness
