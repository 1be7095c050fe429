#include "smt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "smt/config.hpp"
#include "smt/error.hpp"

namespace smt {
namespace {

double mean_of(std::span<const double> v) {
  double total = 0;
  for (auto x : v) total += x;
  return total / static_cast<double>(v.size());
}

// Exact test; a variance sum can come out as rounding noise instead of 0.
bool constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

MetricsReport compute_metrics(std::span<const double> observed, std::span<const double> predicted,
                              double horizon_min) {
  if (observed.size() != predicted.size()) {
    throw DimensionError("compute_metrics: " + std::to_string(observed.size()) + " observations vs " +
                         std::to_string(predicted.size()) + " predictions");
  }
  if (observed.size() < 2) throw DimensionError("compute_metrics: need at least two samples");

  const std::size_t n = observed.size();
  const double y_bar = mean_of(observed);
  const double p_bar = mean_of(predicted);
  double sse = 0, syy = 0, spp = 0, syp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = observed[i] - predicted[i];
    const double dy = observed[i] - y_bar;
    const double dp = predicted[i] - p_bar;
    sse += e * e;
    syy += dy * dy;
    spp += dp * dp;
    syp += dy * dp;
  }

  MetricsReport r;
  r.n = n;
  r.horizon_min = horizon_min;
  r.rmse = std::sqrt(sse / static_cast<double>(n));
  const bool flat_obs = constant(observed), flat_pred = constant(predicted);
  if (!flat_obs && syy > 0) r.rse = std::sqrt(sse / syy);
  if (!flat_obs && !flat_pred && syy > 0 && spp > 0) r.corr = std::clamp(syp / std::sqrt(syy * spp), -1.0, 1.0);
  return r;
}

std::vector<DailyRmse> daily_rmse(std::span<const DatedPair> pairs) {
  struct Acc {
    std::size_t n = 0;
    double sse = 0;
  };
  std::map<std::chrono::sys_days, Acc> by_day;
  for (const auto& p : pairs) {
    auto& acc = by_day[std::chrono::sys_days{p.date}];
    const double e = p.observed - p.predicted;
    acc.sse += e * e;
    ++acc.n;
  }
  std::vector<DailyRmse> out;
  out.reserve(by_day.size());
  for (const auto& [day, acc] : by_day) {
    out.push_back({Date{day}, acc.n, std::sqrt(acc.sse / static_cast<double>(acc.n))});
  }
  return out;
}

std::string metrics_csv_header() { return "horizon_min,n,rmse,rse,corr"; }

std::string metrics_csv_row(const MetricsReport& r) {
  std::string row = format_real(r.horizon_min) + "," + std::to_string(r.n) + "," + format_real(r.rmse) + ",";
  if (r.rse) row += format_real(*r.rse);
  row += ",";
  if (r.corr) row += format_real(*r.corr);
  return row;
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report '" + path + "'");
  out << metrics_csv_header() << '\n' << metrics_csv_row(report) << '\n';
  if (!out) throw IoError("failed writing report '" + path + "'");
}

void write_daily_csv(const std::string& path, std::span<const DailyRmse> days) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report '" + path + "'");
  out << "date,n,rmse\n";
  for (const auto& d : days) out << format_date(d.date) << ',' << d.n << ',' << format_real(d.rmse) << '\n';
  if (!out) throw IoError("failed writing report '" + path + "'");
}

}  // namespace smt
