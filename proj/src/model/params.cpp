#include "cycleground/model/params.hpp"

#include <cmath>

#include "cycleground/errors.hpp"
#include "cycleground/numcore/rng.hpp"

namespace cycleground::model {

using numcore::Matrix;

std::string_view to_string(LocalizerVariant v) {
  switch (v) {
    case LocalizerVariant::Linear: return "linear";
    case LocalizerVariant::Mlp: return "mlp";
    case LocalizerVariant::UseHiddenState: return "use_hA";
  }
  return "linear";
}

LocalizerVariant localizer_variant_from_string(std::string_view name) {
  if (name == "linear") return LocalizerVariant::Linear;
  if (name == "mlp") return LocalizerVariant::Mlp;
  if (name == "use_hA") return LocalizerVariant::UseHiddenState;
  throw UsageError("unknown localizer variant '" + std::string(name) +
                   "' (expected linear, mlp or use_hA)");
}

void ModelDims::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ValidationError(std::string("model dims: ") + what + " must be >= 1");
  };
  positive(vocab, "vocab");
  positive(embed, "embed");
  positive(hidden, "hidden");
  positive(feature, "feature");
  positive(classes, "classes");
  positive(location, "location");
}

namespace {

// An embedding row is selected by a one-hot input, so its fan-in is 1.
Matrix uniform_init(numcore::Rng& rng, int rows, int cols, int fan_in = 0) {
  const double a = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : rows));
  Matrix m(rows, cols);
  for (numcore::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
  return m;
}

Matrix lstm_bias(int hidden) {
  Matrix b = Matrix::Zero(1, 4 * hidden);
  b.middleCols(hidden, hidden).setConstant(1.0);
  return b;
}

}  // namespace

ModelParams init_params(const ModelDims& dims, LocalizerVariant localizer, std::uint64_t seed) {
  dims.validate();
  numcore::Rng rng(seed, /*stream=*/0x1417);
  ModelParams p{dims, localizer, {}};
  const int d = dims.encoded();
  const int h = dims.hidden;
  auto& v = p.values;
  v.add(std::string(names::kWordEmbedding), uniform_init(rng, dims.vocab, dims.embed, /*fan_in=*/1));
  v.add(std::string(names::kAttnLstmW), uniform_init(rng, d + h + dims.embed + h, 4 * h));
  v.add(std::string(names::kAttnLstmB), lstm_bias(h));
  v.add(std::string(names::kLangLstmW), uniform_init(rng, d + h + h, 4 * h));
  v.add(std::string(names::kLangLstmB), lstm_bias(h));
  v.add(std::string(names::kAttnProj), uniform_init(rng, h, d));
  v.add(std::string(names::kAttnScore), uniform_init(rng, d, 1));
  v.add(std::string(names::kOutput), uniform_init(rng, h, dims.vocab));
  v.add(std::string(names::kOutputBias), Matrix::Zero(1, dims.vocab));
  switch (localizer) {
    case LocalizerVariant::Linear:
      v.add(std::string(names::kLocalizer), uniform_init(rng, dims.embed, d));
      break;
    case LocalizerVariant::Mlp:
      v.add(std::string(names::kLocalizerHidden), uniform_init(rng, dims.embed, dims.embed));
      v.add(std::string(names::kLocalizer), uniform_init(rng, dims.embed, d));
      break;
    case LocalizerVariant::UseHiddenState:
      v.add(std::string(names::kLocalizer), uniform_init(rng, h, d));
      break;
  }
  v.add(std::string(names::kClassifier), uniform_init(rng, dims.feature, dims.classes));
  v.add(std::string(names::kLocation), uniform_init(rng, 4, dims.location));
  v.add(std::string(names::kLocationBias), Matrix::Zero(1, dims.location));
  return p;
}

}  // namespace cycleground::model
