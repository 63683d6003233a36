#include "ftrl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ftrl {

bool SeriesFrame::has_column(const std::string& name) const {
  for (const auto& n : column_names) {
    if (n == name) return true;
  }
  return false;
}

const std::vector<double>& SeriesFrame::column(const std::string& name) const {
  for (std::size_t i = 0; i < column_names.size(); ++i) {
    if (column_names[i] == name) return columns[i];
  }
  throw IoError("missing column: " + name);
}

void SeriesFrame::add_column(std::string name, std::vector<double> values) {
  if (values.size() != timestamps.size()) {
    throw ContractViolation("column " + name + " has " +
                            std::to_string(values.size()) + " rows, frame has " +
                            std::to_string(timestamps.size()));
  }
  column_names.push_back(std::move(name));
  columns.push_back(std::move(values));
}

void SeriesFrame::validate() const {
  for (const auto& col : columns) {
    if (col.size() != timestamps.size()) {
      throw ContractViolation("ragged frame: column length mismatch");
    }
  }
  std::int64_t prev = INT64_MIN;
  for (const auto& ts : timestamps) {
    const std::int64_t d = parse_iso_date(ts);
    if (d <= prev) {
      throw IoError("timestamps not strictly increasing at " + ts);
    }
    prev = d;
  }
}

namespace {

// Howard Hinnant's days-from-civil algorithm.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) -
         719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

}  // namespace

std::int64_t parse_iso_date(const std::string& s) {
  int y = 0, m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c", &y, &m, &d, &tail) != 3 ||
      s.size() != 10) {
    throw IoError("malformed ISO-8601 date: '" + s + "'");
  }
  if (m < 1 || m > 12 || d < 1 || d > 31) {
    throw IoError("invalid date: '" + s + "'");
  }
  return days_from_civil(y, m, d);
}

std::string format_iso_date(std::int64_t days) {
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(field, &pos);
    if (pos != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw IoError("malformed numeric field '" + field + "' at line " +
                  std::to_string(line_no));
  }
}

}  // namespace

SeriesFrame load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV file: " + path);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  int ts_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "timestamp") ts_col = static_cast<int>(i);
  }
  if (ts_col < 0) throw IoError(path + ": required column 'timestamp' missing");
  bool has_close = false;
  for (const auto& h : header) has_close = has_close || h == "close";
  if (!has_close) throw IoError(path + ": required column 'close' missing");

  struct Row {
    std::int64_t key;
    std::string ts;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw IoError("malformed row at line " + std::to_string(line_no) +
                    ": expected " + std::to_string(header.size()) +
                    " fields, got " + std::to_string(fields.size()));
    }
    Row row;
    row.ts = trim(fields[static_cast<std::size_t>(ts_col)]);
    try {
      row.key = parse_iso_date(row.ts);
    } catch (const IoError& e) {
      throw IoError(std::string(e.what()) + " at line " + std::to_string(line_no));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (static_cast<int>(i) == ts_col) continue;
      row.values.push_back(parse_number(trim(fields[i]), line_no));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": no data rows");

  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.key < b.key; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].key == rows[i - 1].key) {
      throw IoError("duplicate timestamp " + rows[i].ts);
    }
  }

  SeriesFrame frame;
  for (const auto& h : header) {
    if (h != "timestamp") frame.column_names.push_back(h);
  }
  frame.columns.resize(frame.column_names.size());
  for (const Row& row : rows) {
    frame.timestamps.push_back(row.ts);
    for (std::size_t c = 0; c < row.values.size(); ++c) {
      frame.columns[c].push_back(row.values[c]);
    }
  }
  frame.validate();
  return frame;
}

std::vector<double> log_returns(const std::vector<double>& close) {
  if (close.size() < 2) {
    throw ContractViolation("log_returns needs at least 2 observations");
  }
  std::vector<double> out;
  out.reserve(close.size() - 1);
  for (std::size_t i = 0; i < close.size(); ++i) {
    if (close[i] <= 0.0) {
      throw ContractViolation("non-positive price at index " + std::to_string(i));
    }
    if (i > 0) out.push_back(std::log(close[i] / close[i - 1]));
  }
  return out;
}

OptSeries rsi(const std::vector<double>& close, int period) {
  if (period < 1) throw ContractViolation("rsi: period must be >= 1");
  if (close.size() <= static_cast<std::size_t>(period)) {
    throw ContractViolation("rsi: series length must exceed the period");
  }
  const std::size_t n = close.size();
  OptSeries out(n);

  auto rsi_value = [](double avg_gain, double avg_loss) {
    const double total = avg_gain + avg_loss;
    if (total == 0.0) return 50.0;  // flat series: neutral
    return 100.0 * avg_gain / total;
  };

  double avg_gain = 0.0, avg_loss = 0.0;
  for (int i = 1; i <= period; ++i) {
    const double d = close[static_cast<std::size_t>(i)] -
                     close[static_cast<std::size_t>(i - 1)];
    if (d > 0) avg_gain += d;
    else avg_loss -= d;
  }
  avg_gain /= period;
  avg_loss /= period;
  out[static_cast<std::size_t>(period)] = rsi_value(avg_gain, avg_loss);

  for (std::size_t i = static_cast<std::size_t>(period) + 1; i < n; ++i) {
    const double d = close[i] - close[i - 1];
    const double gain = d > 0 ? d : 0.0;
    const double loss = d < 0 ? -d : 0.0;
    avg_gain = (avg_gain * (period - 1) + gain) / period;
    avg_loss = (avg_loss * (period - 1) + loss) / period;
    out[i] = rsi_value(avg_gain, avg_loss);
  }
  return out;
}

namespace {

std::vector<double> ema(const std::vector<double>& x, int span) {
  const double alpha = 2.0 / (span + 1.0);
  std::vector<double> out(x.size());
  out[0] = x[0];  // seeded with the first observation
  for (std::size_t i = 1; i < x.size(); ++i) {
    out[i] = alpha * x[i] + (1.0 - alpha) * out[i - 1];
  }
  return out;
}

}  // namespace

MacdResult macd(const std::vector<double>& close, int fast, int slow,
                int signal) {
  if (fast >= slow) {
    throw ContractViolation("macd: fast span " + std::to_string(fast) +
                            " must be < slow span " + std::to_string(slow));
  }
  if (fast < 1 || signal < 1) throw ContractViolation("macd: spans must be >= 1");
  if (close.size() <= static_cast<std::size_t>(slow)) {
    throw ContractViolation("macd: series length must exceed the slow span");
  }
  MacdResult r;
  const std::vector<double> ef = ema(close, fast);
  const std::vector<double> es = ema(close, slow);
  r.macd.resize(close.size());
  for (std::size_t i = 0; i < close.size(); ++i) r.macd[i] = ef[i] - es[i];
  r.signal = ema(r.macd, signal);
  r.histogram.resize(close.size());
  for (std::size_t i = 0; i < close.size(); ++i) {
    r.histogram[i] = r.macd[i] - r.signal[i];
  }
  return r;
}

BollingerResult bollinger(const std::vector<double>& close, int period,
                          double k) {
  if (period < 2) throw ContractViolation("bollinger: period must be >= 2");
  if (close.size() < static_cast<std::size_t>(period)) {
    throw ContractViolation("bollinger: series shorter than the period");
  }
  const std::size_t n = close.size();
  BollingerResult r;
  r.middle.resize(n);
  r.upper.resize(n);
  r.lower.resize(n);
  for (std::size_t i = static_cast<std::size_t>(period) - 1; i < n; ++i) {
    double mean = 0.0;
    for (int j = 0; j < period; ++j) mean += close[i - static_cast<std::size_t>(j)];
    mean /= period;
    double var = 0.0;
    for (int j = 0; j < period; ++j) {
      const double d = close[i - static_cast<std::size_t>(j)] - mean;
      var += d * d;
    }
    var /= period;  // population variance
    const double sd = std::sqrt(var);
    r.middle[i] = mean;
    r.upper[i] = mean + k * sd;
    r.lower[i] = mean - k * sd;
  }
  return r;
}

std::vector<double> forward_fill(const OptSeries& sparse) {
  if (sparse.empty()) return {};
  if (!sparse.front().has_value()) {
    throw ContractViolation("forward_fill: leading gap has no value to carry");
  }
  std::vector<double> out(sparse.size());
  double last = *sparse.front();
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    if (sparse[i].has_value()) last = *sparse[i];
    out[i] = last;
  }
  return out;
}

WindowedDataset make_windows(const SeriesFrame& frame, int context_length,
                             int horizon, int stride) {
  if (context_length < 1 || horizon < 1 || stride < 1) {
    throw ContractViolation("make_windows: T, P and stride must be >= 1");
  }
  frame.validate();
  const int span = context_length + horizon;
  const int length = static_cast<int>(frame.length());
  if (length < span) {
    throw ContractViolation("make_windows: frame length " +
                            std::to_string(length) + " below required minimum " +
                            std::to_string(span));
  }
  const int n = static_cast<int>(frame.num_columns());
  if (n < 1) throw ContractViolation("make_windows: frame has no feature columns");

  WindowedDataset ds;
  ds.context_length = context_length;
  ds.horizon = horizon;
  ds.stride = stride;
  ds.num_features = n;
  const int count = (length - span) / stride + 1;
  ds.states.reserve(static_cast<std::size_t>(count));
  ds.targets.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w) {
    const int start = w * stride;
    Tensor state = Tensor::zeros({context_length, n});
    for (int t = 0; t < context_length; ++t) {
      for (int c = 0; c < n; ++c) {
        state.at(t, c) = frame.columns[static_cast<std::size_t>(c)]
                                      [static_cast<std::size_t>(start + t)];
      }
    }
    Tensor target = Tensor::zeros({horizon});
    for (int p = 0; p < horizon; ++p) {
      target.at(p) =
          frame.columns[0][static_cast<std::size_t>(start + context_length + p)];
    }
    ds.states.push_back(std::move(state));
    ds.targets.push_back(std::move(target));
    ds.start_rows.push_back(start);
  }
  return ds;
}

WindowedDataset split(WindowedDataset dataset, std::array<double, 3> fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (f <= 0.0) {
      throw ContractViolation("split: fractions must be positive");
    }
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractViolation("split: fractions must sum to 1");
  }
  const int count = static_cast<int>(dataset.size());
  const int n_train = static_cast<int>(std::floor(fractions[0] * count));
  const int n_val = static_cast<int>(std::floor(fractions[1] * count));
  if (n_train < 1 || n_val < 1 || n_train + n_val >= count) {
    throw ContractViolation("split: a split would be empty with " +
                            std::to_string(count) + " windows");
  }
  // Boundaries in row space: the start row of the first window of the next
  // split. A window whose span crosses a boundary is dropped.
  const int span = dataset.context_length + dataset.horizon;
  const int b1 = dataset.start_rows[static_cast<std::size_t>(n_train)];
  const int b2 = dataset.start_rows[static_cast<std::size_t>(n_train + n_val)];
  dataset.train.clear();
  dataset.validation.clear();
  dataset.test.clear();
  for (int w = 0; w < count; ++w) {
    const int start = dataset.start_rows[static_cast<std::size_t>(w)];
    const int end = start + span;  // exclusive
    if (end <= b1) {
      dataset.train.push_back(w);
    } else if (start >= b1 && end <= b2) {
      dataset.validation.push_back(w);
    } else if (start >= b2) {
      dataset.test.push_back(w);
    }
    // else: straddles a boundary, dropped.
  }
  if (dataset.train.empty() || dataset.validation.empty() ||
      dataset.test.empty()) {
    throw ContractViolation("split: boundary dropping emptied a split");
  }
  return dataset;
}

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 1.0;
};

MeanStd prefix_stats(const std::vector<double>& x, double fraction) {
  const std::size_t n =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(x.size() * fraction)));
  const std::size_t m = std::min(n, x.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < m; ++i) mean += x[i];
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (std::size_t i = 0; i < m; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= static_cast<double>(m);
  MeanStd s;
  s.mean = mean;
  s.std = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

std::vector<double> standardize_prefix(const std::vector<double>& x,
                                       double fraction) {
  const MeanStd s = prefix_stats(x, fraction);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - s.mean) / s.std;
  return out;
}

}  // namespace

SeriesFrame build_features(const SeriesFrame& prices, double train_fraction) {
  prices.validate();
  const std::vector<double>& close = prices.column("close");
  if (close.size() < 40) {
    throw ContractViolation("build_features: need at least 40 rows for the "
                            "indicator warm-up");
  }

  const std::vector<double> lr = log_returns(close);  // aligned to rows 1..L-1
  const OptSeries rsi14 = rsi(close, 14);
  const MacdResult mac = macd(close);
  const BollingerResult boll = bollinger(close);

  // First row where everything is defined: log return needs row 1, RSI row
  // 14, Bollinger row 19. MACD is defined everywhere.
  const std::size_t first = 19;
  const std::size_t rows = close.size() - first;

  auto slice = [&](const std::vector<double>& x, std::size_t offset) {
    return std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(offset),
                               x.end());
  };

  std::vector<double> target = slice(lr, first - 1);  // lr[i-1] is row i's return
  std::vector<double> rsi_c(rows), bpos(rows), bwidth(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t r = first + i;
    rsi_c[i] = (*rsi14[r] - 50.0) / 50.0;
    const double up = *boll.upper[r];
    const double lo = *boll.lower[r];
    const double mid = *boll.middle[r];
    const double width = up - lo;
    bpos[i] = width > 0.0 ? (close[r] - lo) / width - 0.5 : 0.0;
    bwidth[i] = mid != 0.0 ? width / std::abs(mid) : 0.0;
  }

  std::vector<double> extra(rows);
  if (prices.has_column("volume")) {
    const std::vector<double>& vol = prices.column("volume");
    for (std::size_t i = 0; i < rows; ++i) {
      extra[i] = std::log(std::max(vol[first + i], 1.0));
    }
  } else {
    for (std::size_t i = 0; i < rows; ++i) extra[i] = std::abs(target[i]);
  }

  SeriesFrame out;
  out.timestamps.assign(prices.timestamps.begin() + static_cast<std::ptrdiff_t>(first),
                        prices.timestamps.end());
  out.add_column("ret", standardize_prefix(target, train_fraction));
  out.add_column("rsi", rsi_c);
  out.add_column("macd", standardize_prefix(slice(mac.macd, first), train_fraction));
  out.add_column("macd_sig", standardize_prefix(slice(mac.signal, first), train_fraction));
  out.add_column("macd_hist", standardize_prefix(slice(mac.histogram, first), train_fraction));
  out.add_column("boll_pos", bpos);
  out.add_column("boll_width", standardize_prefix(bwidth, train_fraction));
  out.add_column("aux", standardize_prefix(extra, train_fraction));
  out.validate();
  return out;
}

}  // namespace ftrl
