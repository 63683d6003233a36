#ifndef FTRL_SYNTH_HPP
#define FTRL_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ftrl/data.hpp"

namespace ftrl {

/// One stretch of an autoregressive regime. `ar[j]` multiplies every
/// feature's own value at lag j+1.
struct SynthRegime {
  std::vector<double> ar;
  double noise_scale = 1.0;
  double drift = 0.0;
  int length = 0;
};

/// Multivariate AR generator: per-regime self-lag coefficients plus a
/// cross-feature lag-1 coupling matrix. Column 0 is the prediction target and
/// is standardized to zero mean / unit variance over the leading
/// `standardize_fraction` of rows (the train split). Deterministic per seed.
struct SynthSpec {
  int num_features = 8;
  std::vector<SynthRegime> regimes;
  std::vector<double> coupling;  // row-major [num_features x num_features]
  std::uint64_t seed = 0;
  double standardize_fraction = 0.7;

  void validate() const;
  int total_length() const;
};

/// Generates the frame. If any regime's companion matrix has spectral radius
/// >= 1 a warning is recorded on the frame and values are clipped at +/- 10
/// noise standard deviations.
SeriesFrame synth_generate(const SynthSpec& spec);

/// Spectral radius of the AR companion matrix for one regime under the given
/// coupling. >= 1 means the recursion is not stable.
double regime_spectral_radius(const SynthRegime& regime,
                              const std::vector<double>& coupling,
                              int num_features);

inline const std::vector<std::string>& synth_preset_names() {
  static const std::vector<std::string> names{
      "synth-financial", "synth-industrials", "synth-technology"};
  return names;
}

/// Named dataset presets used by the transfer-learning experiments. All
/// three share one latent factor path (same master seed -> same factor), so
/// skills learned on one transfer to the others, while loadings, dynamics
/// and noise differ per preset. 8 feature columns; column 0 is the target.
SeriesFrame make_preset(const std::string& name, int rows, std::uint64_t seed);

bool is_synth_preset(const std::string& name);

}  // namespace ftrl

#endif  // FTRL_SYNTH_HPP
