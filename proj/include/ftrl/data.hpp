#ifndef FTRL_DATA_HPP
#define FTRL_DATA_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ftrl/tensor.hpp"

namespace ftrl {

/// A real-valued series that may have gaps (slow-refreshing inputs).
using OptSeries = std::vector<std::optional<double>>;

/// Columnar time series: strictly increasing ISO-8601 date timestamps plus
/// equally long named real-valued columns.
struct SeriesFrame {
  std::vector<std::string> timestamps;
  std::vector<std::string> column_names;
  std::vector<std::vector<double>> columns;
  std::vector<std::string> warnings;  // non-fatal generation notes

  std::size_t length() const { return timestamps.size(); }
  std::size_t num_columns() const { return columns.size(); }
  bool has_column(const std::string& name) const;
  const std::vector<double>& column(const std::string& name) const;
  void add_column(std::string name, std::vector<double> values);
  /// Validates equal lengths and strictly increasing timestamps.
  void validate() const;
};

/// Days since 1970-01-01 for a strict YYYY-MM-DD date; throws IoError on
/// malformed input.
std::int64_t parse_iso_date(const std::string& s);
std::string format_iso_date(std::int64_t days);

/// CSV input: header row; required columns `timestamp` (ISO-8601 date) and
/// `close`; optional open, low, high, volume. UTF-8, comma separated, '.'
/// decimal point. Rows are sorted by timestamp; duplicates are rejected.
SeriesFrame load_csv(const std::string& path);

/// r_t = ln(close_t / close_{t-1}); length shrinks by one.
std::vector<double> log_returns(const std::vector<double>& close);

/// Wilder-smoothed relative strength index in [0, 100]. The first `period`
/// entries are undefined and returned as missing.
OptSeries rsi(const std::vector<double>& close, int period = 14);

struct MacdResult {
  std::vector<double> macd;
  std::vector<double> signal;
  std::vector<double> histogram;
};

/// EMA(fast) - EMA(slow), its EMA(signal) line and their difference. Each
/// EMA is seeded with the first value of its input.
MacdResult macd(const std::vector<double>& close, int fast = 12, int slow = 26,
                int signal = 9);

struct BollingerResult {
  OptSeries middle;
  OptSeries upper;
  OptSeries lower;
};

/// Rolling mean +/- k * rolling population standard deviation over `period`
/// observations; the first period-1 entries are missing.
BollingerResult bollinger(const std::vector<double>& close, int period = 20,
                          double k = 2.0);

/// Replaces every gap with the most recent earlier value. A leading gap has
/// nothing to carry and is an error.
std::vector<double> forward_fill(const OptSeries& sparse);

/// Aligned (state window, future target) pairs. Column 0 of the source frame
/// is the prediction target. Window i covers rows [i*stride, i*stride + T)
/// and its target rows [i*stride + T, i*stride + T + P), so states always
/// precede targets.
struct WindowedDataset {
  std::vector<Tensor> states;   // [T x N] each
  std::vector<Tensor> targets;  // [P] each
  std::vector<int> start_rows;  // window i begins at this frame row
  int context_length = 0;       // T
  int horizon = 0;              // P
  int stride = 1;
  int num_features = 0;

  // Chronological split tags (window indices). Empty until split() runs.
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;

  std::size_t size() const { return states.size(); }
  bool has_splits() const { return !train.empty() || !validation.empty() || !test.empty(); }
};

WindowedDataset make_windows(const SeriesFrame& frame, int context_length,
                             int horizon, int stride = 1);

/// Tags windows train/validation/test chronologically. Boundaries are drawn
/// in row space from the window-count fractions; windows whose span crosses
/// a boundary are dropped from both sides, so every train timestamp precedes
/// every validation timestamp and so on.
WindowedDataset split(WindowedDataset dataset,
                      std::array<double, 3> fractions = {0.7, 0.15, 0.15});

/// Feature matrix built from raw price data: standardized log return of
/// close (column 0, the target) plus technical indicator columns. Indicator
/// warm-up rows are dropped; standardization statistics come from the first
/// `train_fraction` of rows.
SeriesFrame build_features(const SeriesFrame& prices,
                           double train_fraction = 0.7);

}  // namespace ftrl

#endif  // FTRL_DATA_HPP
