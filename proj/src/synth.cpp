#include "ftrl/synth.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

#include "ftrl/rng.hpp"

namespace ftrl {

void SynthSpec::validate() const {
  if (num_features < 1) throw ContractViolation("synth: num_features must be >= 1");
  if (regimes.empty()) throw ContractViolation("synth: at least one regime required");
  for (const SynthRegime& r : regimes) {
    if (r.noise_scale < 0.0) {
      throw ContractViolation("synth: noise scale must be >= 0");
    }
    if (r.length < 1) throw ContractViolation("synth: regime length must be >= 1");
  }
  if (!coupling.empty() &&
      coupling.size() != static_cast<std::size_t>(num_features) * num_features) {
    throw ContractViolation("synth: coupling matrix must be num_features^2");
  }
  if (standardize_fraction <= 0.0 || standardize_fraction > 1.0) {
    throw ContractViolation("synth: standardize_fraction must be in (0, 1]");
  }
}

int SynthSpec::total_length() const {
  int n = 0;
  for (const SynthRegime& r : regimes) n += r.length;
  return n;
}

double regime_spectral_radius(const SynthRegime& regime,
                              const std::vector<double>& coupling,
                              int num_features) {
  const int k = num_features;
  const bool has_coupling = !coupling.empty();
  const int p = std::max<int>(static_cast<int>(regime.ar.size()),
                              has_coupling ? 1 : 0);
  if (p == 0) return 0.0;

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(k * p, k * p);
  for (int lag = 0; lag < p; ++lag) {
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(k, k);
    if (lag < static_cast<int>(regime.ar.size())) {
      block += regime.ar[static_cast<std::size_t>(lag)] *
               Eigen::MatrixXd::Identity(k, k);
    }
    if (lag == 0 && has_coupling) {
      for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) {
          block(r, c) += coupling[static_cast<std::size_t>(r) * k + c];
        }
      }
    }
    companion.block(0, lag * k, k, k) = block;
  }
  for (int lag = 1; lag < p; ++lag) {
    companion.block(lag * k, (lag - 1) * k, k, k) =
        Eigen::MatrixXd::Identity(k, k);
  }
  return companion.eigenvalues().cwiseAbs().maxCoeff();
}

SeriesFrame synth_generate(const SynthSpec& spec) {
  spec.validate();
  const int k = spec.num_features;
  const int total = spec.total_length();
  int max_lag = 1;
  for (const SynthRegime& r : spec.regimes) {
    max_lag = std::max(max_lag, static_cast<int>(r.ar.size()));
  }

  SeriesFrame frame;
  std::vector<std::vector<double>> series(
      static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(total)));

  Rng rng(derive_seed(spec.seed, "synth"));
  std::vector<std::vector<double>> history;  // history[j] = x_{t-1-j}

  int t = 0;
  for (std::size_t ri = 0; ri < spec.regimes.size(); ++ri) {
    const SynthRegime& regime = spec.regimes[ri];
    const double radius = regime_spectral_radius(regime, spec.coupling, k);
    const bool unstable = radius >= 1.0;
    const double clip_limit =
        10.0 * (regime.noise_scale > 0.0 ? regime.noise_scale : 1.0);
    if (unstable) {
      frame.warnings.push_back("regime " + std::to_string(ri) +
                               " spectral radius " + std::to_string(radius) +
                               " >= 1; values clipped at +/-" +
                               std::to_string(clip_limit));
    }
    for (int step = 0; step < regime.length; ++step, ++t) {
      std::vector<double> x(static_cast<std::size_t>(k), regime.drift);
      for (std::size_t lag = 0; lag < regime.ar.size(); ++lag) {
        if (lag >= history.size()) break;
        for (int f = 0; f < k; ++f) {
          x[static_cast<std::size_t>(f)] +=
              regime.ar[lag] * history[lag][static_cast<std::size_t>(f)];
        }
      }
      if (!spec.coupling.empty() && !history.empty()) {
        for (int r = 0; r < k; ++r) {
          double acc = 0.0;
          for (int c = 0; c < k; ++c) {
            acc += spec.coupling[static_cast<std::size_t>(r) * k + c] *
                   history[0][static_cast<std::size_t>(c)];
          }
          x[static_cast<std::size_t>(r)] += acc;
        }
      }
      for (int f = 0; f < k; ++f) {
        x[static_cast<std::size_t>(f)] += regime.noise_scale * rng.normal();
        if (unstable) {
          x[static_cast<std::size_t>(f)] =
              std::clamp(x[static_cast<std::size_t>(f)], -clip_limit, clip_limit);
        }
        series[static_cast<std::size_t>(f)][static_cast<std::size_t>(t)] =
            x[static_cast<std::size_t>(f)];
      }
      history.insert(history.begin(), x);
      if (static_cast<int>(history.size()) > max_lag) history.pop_back();
    }
  }

  // Standardize the target column over the train prefix.
  {
    std::vector<double>& y = series[0];
    const std::size_t m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(total * spec.standardize_fraction)));
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += y[i];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) var += (y[i] - mean) * (y[i] - mean);
    var /= static_cast<double>(m);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (double& v : y) v = (v - mean) / sd;
  }

  const std::int64_t day0 = parse_iso_date("2000-01-01");
  for (int i = 0; i < total; ++i) {
    frame.timestamps.push_back(format_iso_date(day0 + i));
  }
  for (int f = 0; f < k; ++f) {
    frame.add_column("f" + std::to_string(f), std::move(series[static_cast<std::size_t>(f)]));
  }
  frame.validate();
  return frame;
}

namespace {

struct PresetParams {
  double idio_ar;
  double idio_noise;
  double target_self;
  double target_factor;
  double target_noise;
  std::array<double, 6> loadings;
  double late_noise_mult;  // second-half regime
};

PresetParams preset_params(const std::string& name) {
  if (name == "synth-financial") {
    return {0.25, 1.00, 0.15, 0.80, 0.35,
            {0.9, 0.7, 0.5, 0.3, -0.4, -0.6}, 1.6};
  }
  if (name == "synth-industrials") {
    return {0.45, 0.80, 0.25, 0.65, 0.40,
            {0.5, 0.8, -0.3, 0.6, 0.2, -0.7}, 1.3};
  }
  if (name == "synth-technology") {
    return {0.35, 1.20, 0.10, 0.90, 0.30,
            {0.2, -0.5, 0.8, 0.4, 0.7, 0.3}, 1.45};
  }
  throw ContractViolation("unknown synthetic preset: " + name);
}

}  // namespace

bool is_synth_preset(const std::string& name) {
  for (const auto& n : synth_preset_names()) {
    if (n == name) return true;
  }
  return false;
}

SeriesFrame make_preset(const std::string& name, int rows, std::uint64_t seed) {
  const PresetParams p = preset_params(name);
  if (rows < 8) throw ContractViolation("preset needs at least 8 rows");

  // Shared latent factor: same master seed -> same path for every preset.
  std::vector<double> factor(static_cast<std::size_t>(rows), 0.0);
  {
    Rng frng(derive_seed(seed, "synth.factor"));
    double f1 = 0.0, f2 = 0.0;
    for (int t = 0; t < rows; ++t) {
      const double f = 0.55 * f1 + 0.20 * f2 + frng.normal();
      factor[static_cast<std::size_t>(t)] = f;
      f2 = f1;
      f1 = f;
    }
  }

  const int half = rows / 2;
  auto noise_mult = [&](int t) { return t >= half ? p.late_noise_mult : 1.0; };

  std::vector<std::vector<double>> idio(
      6, std::vector<double>(static_cast<std::size_t>(rows)));
  for (int k = 0; k < 6; ++k) {
    Rng irng(derive_seed(seed, "synth.idio." + name, static_cast<std::uint64_t>(k)));
    double prev = 0.0;
    for (int t = 0; t < rows; ++t) {
      prev = p.idio_ar * prev + p.idio_noise * noise_mult(t) * irng.normal();
      idio[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)] = prev;
    }
  }

  std::vector<double> target(static_cast<std::size_t>(rows));
  {
    Rng trng(derive_seed(seed, "synth.target." + name));
    double prev = 0.0;
    for (int t = 0; t < rows; ++t) {
      const double f_lag = t > 0 ? factor[static_cast<std::size_t>(t - 1)] : 0.0;
      const double y = p.target_self * prev + p.target_factor * f_lag +
                       p.target_noise * noise_mult(t) * trng.normal();
      target[static_cast<std::size_t>(t)] = y;
      prev = y;
    }
    // Standardize over the train prefix.
    const std::size_t m = static_cast<std::size_t>(std::floor(rows * 0.7));
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += target[i];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) var += (target[i] - mean) * (target[i] - mean);
    var /= static_cast<double>(m);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (double& v : target) v = (v - mean) / sd;
  }

  SeriesFrame frame;
  const std::int64_t day0 = parse_iso_date("2000-01-01");
  for (int t = 0; t < rows; ++t) {
    frame.timestamps.push_back(format_iso_date(day0 + t));
  }
  frame.add_column("f0", std::move(target));
  for (int k = 0; k < 6; ++k) {
    std::vector<double> col(static_cast<std::size_t>(rows));
    for (int t = 0; t < rows; ++t) {
      col[static_cast<std::size_t>(t)] =
          idio[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)] +
          p.loadings[static_cast<std::size_t>(k)] * factor[static_cast<std::size_t>(t)];
    }
    frame.add_column("f" + std::to_string(k + 1), std::move(col));
  }
  frame.add_column("f7", std::move(factor));
  frame.validate();
  return frame;
}

}  // namespace ftrl
