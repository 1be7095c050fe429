#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smt/timeutil.hpp"

namespace smt {

/// Accuracy of a forecast series against observations, in W/m^2.
struct MetricsReport {
  std::size_t n = 0;
  double rmse = 0;
  /// Root relative squared error; 1 equals the mean predictor. Absent when
  /// the observations have zero variance.
  std::optional<double> rse;
  /// Pearson correlation; absent when either series has zero variance.
  std::optional<double> corr;
  double horizon_min = 0;
};

/// RMSE, RSE and CORR of `predicted` against `observed`.
/// Throws DimensionError unless both have the same length n >= 2.
MetricsReport compute_metrics(std::span<const double> observed, std::span<const double> predicted,
                              double horizon_min = 0);

/// One forecast/observation pair tagged with the local date it belongs to.
struct DatedPair {
  Date date;
  double observed = 0;
  double predicted = 0;
};

struct DailyRmse {
  Date date;
  std::size_t n = 0;
  double rmse = 0;
};

/// RMSE per local date, in chronological order.
std::vector<DailyRmse> daily_rmse(std::span<const DatedPair> pairs);

/// Writes `horizon_min,n,rmse,rse,corr` plus one data row; absent values are
/// empty fields.
void write_metrics_csv(const std::string& path, const MetricsReport& report);
/// Writes `date,n,rmse` rows.
void write_daily_csv(const std::string& path, std::span<const DailyRmse> days);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);

}  // namespace smt
