#include "nlspec/model.hpp"

#include "nlspec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace nlspec {

namespace {

constexpr double pi = std::numbers::pi;
constexpr double inf = std::numeric_limits<double>::infinity();
// min_t sin(t)/t, attained at the first positive root of tan t = t.
constexpr double sinc_min = -0.21723362821122166;

void check_dim(int dim) {
  if (dim < 1 || dim > 3)
    throw UsageError("dimension must be 1, 2 or 3");
}

void check_positive(double v, const char *what) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw UsageError(std::string(what) + " must be positive and finite");
}

void check_finite(double v, const char *what) {
  if (!std::isfinite(v))
    throw UsageError(std::string(what) + " must be finite");
}

double sinc(double t) { return std::abs(t) < 1e-8 ? 1.0 - t * t / 6.0 : std::sin(t) / t; }

Point minus(const Point &a, const Point &b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

double inf_norm(const Point &p, int dim) {
  double r = 0.0;
  for (int a = 0; a < dim; ++a)
    r = std::max(r, std::abs(p[a]));
  return r;
}

// Nearest node lookup on a table; nullopt off the box.
std::optional<std::size_t> nearest_node(const Grid &g, const Point &x) {
  std::array<std::size_t, 3> idx{0, 0, 0};
  const double h = g.spacing();
  const double L = g.half_width();
  for (int a = 0; a < g.dim(); ++a) {
    const double t = std::round((x[a] + L) / h);
    if (t < 0.0 || t > static_cast<double>(g.points_per_dim() - 1))
      return std::nullopt;
    idx[a] = static_cast<std::size_t>(t);
  }
  return g.flatten(idx);
}

std::vector<Point> directions(int dim, std::size_t count) {
  std::vector<Point> dirs;
  if (dim == 1) {
    dirs.push_back({1, 0, 0});
    dirs.push_back({-1, 0, 0});
  } else if (dim == 2) {
    const std::size_t n = std::max<std::size_t>(count, 4);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = 2.0 * pi * static_cast<double>(i) / static_cast<double>(n);
      dirs.push_back({std::cos(t), std::sin(t), 0});
    }
  } else {
    // Fibonacci sphere plus the coordinate axes.
    const std::size_t n = std::max<std::size_t>(count, 6);
    const double golden = pi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n; ++i) {
      const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      const double r = std::sqrt(1.0 - z * z);
      const double t = golden * static_cast<double>(i);
      dirs.push_back({r * std::cos(t), r * std::sin(t), z});
    }
    for (int a = 0; a < 3; ++a) {
      Point e{0, 0, 0};
      e[a] = 1.0;
      dirs.push_back(e);
      e[a] = -1.0;
      dirs.push_back(e);
    }
  }
  return dirs;
}

nlohmann::json point_json(const Point &p, int dim) {
  auto j = nlohmann::json::array();
  for (int a = 0; a < dim; ++a)
    j.push_back(p[a]);
  return j;
}

Point point_from_json(const nlohmann::json &j, int dim) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    throw ConfigError("center must be an array of length " + std::to_string(dim));
  Point p{0, 0, 0};
  for (int a = 0; a < dim; ++a) {
    if (!j[a].is_number())
      throw ConfigError("center entries must be numbers");
    p[a] = j[a].get<double>();
  }
  return p;
}

Params params_from_json(const nlohmann::json &j, const std::vector<std::string> &allowed,
                        const std::string &what) {
  Params p;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "name" || it.key() == "center" || it.key() == "file" ||
        it.key() == "terms" || it.key() == "decay" || it.key() == "allow_asymmetric")
      continue;
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("unknown parameter '" + it.key() + "' for " + what);
    if (!it.value().is_number())
      throw ConfigError("parameter '" + it.key() + "' of " + what + " must be a number");
    p[it.key()] = it.value().get<double>();
  }
  return p;
}

double get_or(const Params &p, const std::string &key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

std::filesystem::path resolve(const std::string &file, const std::filesystem::path &base) {
  std::filesystem::path p(file);
  if (p.is_relative() && !base.empty())
    p = base / p;
  return p;
}

} // namespace

// ---------------------------------------------------------------------------

const char *to_string(DecaySide side) {
  switch (side) {
  case DecaySide::symbol_near_zero: return "symbol_near_zero";
  case DecaySide::potential_at_infinity: return "potential_at_infinity";
  case DecaySide::symbol_at_infinity: return "symbol_at_infinity";
  case DecaySide::potential_near_zero: return "potential_near_zero";
  }
  return "unknown";
}

DecaySide decay_side_from_string(const std::string &s) {
  for (auto side : {DecaySide::symbol_near_zero, DecaySide::potential_at_infinity,
                    DecaySide::symbol_at_infinity, DecaySide::potential_near_zero})
    if (s == to_string(side))
      return side;
  throw ConfigError("unknown decay side '" + s + "'");
}

DecayHypothesis::DecayHypothesis(DecaySide s, double exponent_, double constant_,
                                 double threshold_)
    : side(s), exponent(exponent_), constant(constant_), threshold(threshold_) {
  check_positive(exponent, "decay exponent");
  check_positive(constant, "decay constant");
  check_positive(threshold, "decay threshold");
}

nlohmann::json decay_to_json(const DecayHypothesis &hyp) {
  return {{"side", to_string(hyp.side)},
          {"exponent", hyp.exponent},
          {"constant", hyp.constant},
          {"threshold", hyp.threshold}};
}

DecayHypothesis decay_from_json(const nlohmann::json &j) {
  if (!j.is_object())
    throw ConfigError("decay hypothesis must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "side" && it.key() != "exponent" && it.key() != "constant" &&
        it.key() != "threshold")
      throw ConfigError("unknown key '" + it.key() + "' in decay hypothesis");
  try {
    return DecayHypothesis(decay_side_from_string(j.at("side").get<std::string>()),
                           j.at("exponent").get<double>(), j.at("constant").get<double>(),
                           j.value("threshold", unbounded_threshold));
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("decay hypothesis: ") + e.what());
  } catch (const UsageError &e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Kernel

Kernel Kernel::zero(int dim) {
  check_dim(dim);
  Kernel k(dim, KernelKind::zero);
  k.weight_ = 0.0;
  return k;
}

Kernel Kernel::gaussian(int dim, double scale, double weight) {
  check_dim(dim);
  check_positive(scale, "kernel scale");
  check_finite(weight, "kernel weight");
  Kernel k(dim, KernelKind::gaussian);
  k.scale_ = scale;
  k.weight_ = weight;
  return k;
}

Kernel Kernel::box(int dim, double half_width, double weight) {
  Kernel k = gaussian(dim, half_width, weight);
  k.kind_ = KernelKind::box;
  return k;
}

Kernel Kernel::exponential(int dim, double scale, double weight) {
  Kernel k = gaussian(dim, scale, weight);
  k.kind_ = KernelKind::exponential;
  return k;
}

Kernel Kernel::cauchy(int dim, double scale, double weight) {
  Kernel k = gaussian(dim, scale, weight);
  k.kind_ = KernelKind::cauchy;
  return k;
}

Kernel Kernel::builtin(int dim, const std::string &name, const Params &params) {
  for (const auto &[key, _] : params)
    if (key != "scale" && key != "weight")
      throw ConfigError("unknown kernel parameter '" + key + "'");
  const double s = get_or(params, "scale", 1.0);
  const double w = get_or(params, "weight", 1.0);
  if (name == "zero")
    return zero(dim);
  if (name == "gaussian")
    return gaussian(dim, s, w);
  if (name == "box" || name == "uniform")
    return box(dim, s, w);
  if (name == "exponential")
    return exponential(dim, s, w);
  if (name == "cauchy")
    return cauchy(dim, s, w);
  throw ConfigError("unknown kernel '" + name + "'");
}

Kernel Kernel::tabulated(GridFunction samples, bool allow_asymmetric) {
  if (samples.space != Space::physical)
    throw UsageError("kernel table must hold physical-space samples");
  const Grid &g = samples.grid;
  double l1 = 0.0;
  for (const auto &v : samples.values) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw UsageError("kernel table holds non-finite values");
    l1 += std::abs(v);
  }
  l1 *= g.cell_volume();
  if (!std::isfinite(l1))
    throw UsageError("kernel table is not summable");
  // Mirror index: x_j -> -x_j is j -> (N - j) mod N on each axis.
  const std::size_t n = g.points_per_dim();
  double asym = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto idx = g.unflatten(i);
    for (int a = 0; a < g.dim(); ++a)
      idx[a] = (n - idx[a]) % n;
    const cplx mirrored = samples.values[g.flatten(idx)];
    asym = std::max(asym, std::abs(mirrored - std::conj(samples.values[i])));
  }
  if (asym > 1e-12 && !allow_asymmetric)
    throw UsageError("kernel table violates a(-x) = conj(a(x)) (max deviation " +
                     std::to_string(asym) + ")");
  Kernel k(g.dim(), KernelKind::tabulated);
  k.weight_ = l1;
  k.scale_ = g.spacing();
  k.asymmetry_ = asym;
  k.table_ = std::move(samples);
  return k;
}

Kernel Kernel::from_file(const std::filesystem::path &path, bool allow_asymmetric) {
  Kernel k = tabulated(read_samples(path), allow_asymmetric);
  k.source_ = path;
  return k;
}

std::string Kernel::name() const {
  switch (kind_) {
  case KernelKind::zero: return "zero";
  case KernelKind::gaussian: return "gaussian";
  case KernelKind::box: return "box";
  case KernelKind::exponential: return "exponential";
  case KernelKind::cauchy: return "cauchy";
  case KernelKind::tabulated: return "tabulated";
  }
  return "unknown";
}

cplx Kernel::symbol_complex(const Point &xi) const {
  for (int a = 0; a < dim_; ++a)
    if (!std::isfinite(xi[a]))
      throw UsageError("frequency must be finite");
  const double s = scale_;
  switch (kind_) {
  case KernelKind::zero:
    return 0.0;
  case KernelKind::gaussian:
  {
    const double r = norm2(xi, dim_);
    return weight_ * std::exp(-0.5 * s * s * r * r);
  }
  case KernelKind::box: {
    double r = weight_;
    for (int a = 0; a < dim_; ++a)
      r *= sinc(s * xi[a]);
    return r;
  }
  case KernelKind::exponential: {
    double r = weight_;
    for (int a = 0; a < dim_; ++a)
      r /= 1.0 + s * s * xi[a] * xi[a];
    return r;
  }
  case KernelKind::cauchy: {
    double t = 0.0;
    for (int a = 0; a < dim_; ++a)
      t += std::abs(xi[a]);
    return weight_ * std::exp(-s * t);
  }
  case KernelKind::tabulated: {
    const Grid &g = table_->grid;
    const double ny = g.nyquist() * (1.0 + 1e-12);
    for (int a = 0; a < dim_; ++a)
      if (std::abs(xi[a]) > ny)
        throw OutOfRangeError("frequency beyond the Nyquist limit of the kernel table");
    cplx acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Point x = g.node(i);
      double phase = 0.0;
      for (int a = 0; a < dim_; ++a)
        phase += xi[a] * x[a];
      acc += table_->values[i] * std::polar(1.0, -phase);
    }
    return acc * g.cell_volume();
  }
  }
  return 0.0;
}

double Kernel::symbol(const Point &xi) const { return symbol_complex(xi).real(); }

double Kernel::value(const Point &x) const {
  const double s = scale_;
  switch (kind_) {
  case KernelKind::zero:
    return 0.0;
  case KernelKind::gaussian: {
    double r = weight_;
    for (int a = 0; a < dim_; ++a)
      r *= std::exp(-0.5 * x[a] * x[a] / (s * s)) / (std::sqrt(2.0 * pi) * s);
    return r;
  }
  case KernelKind::box: {
    double r = weight_;
    for (int a = 0; a < dim_; ++a) {
      const double t = std::abs(x[a]);
      r *= t < s ? 0.5 / s : (t == s ? 0.25 / s : 0.0);
    }
    return r;
  }
  case KernelKind::exponential: {
    double r = weight_;
    for (int a = 0; a < dim_; ++a)
      r *= 0.5 / s * std::exp(-std::abs(x[a]) / s);
    return r;
  }
  case KernelKind::cauchy: {
    double r = weight_;
    for (int a = 0; a < dim_; ++a)
      r *= s / (pi * (s * s + x[a] * x[a]));
    return r;
  }
  case KernelKind::tabulated: {
    auto node = nearest_node(table_->grid, x);
    return node ? table_->values[*node].real() : 0.0;
  }
  }
  return 0.0;
}

std::optional<Interval> Kernel::exact_symbol_range() const {
  switch (kind_) {
  case KernelKind::zero:
    return Interval{0.0, 0.0};
  case KernelKind::gaussian:
  case KernelKind::exponential:
  case KernelKind::cauchy:
    return weight_ >= 0.0 ? Interval{0.0, weight_} : Interval{weight_, 0.0};
  case KernelKind::box:
    return weight_ >= 0.0 ? Interval{sinc_min * weight_, weight_}
                          : Interval{weight_, sinc_min * weight_};
  case KernelKind::tabulated:
    return std::nullopt;
  }
  return std::nullopt;
}

std::optional<double> Kernel::exact_second_moment() const {
  const double d = dim_;
  const double s2 = scale_ * scale_;
  switch (kind_) {
  case KernelKind::zero: return 0.0;
  case KernelKind::gaussian: return weight_ * d * s2;
  case KernelKind::box: return weight_ * d * s2 / 3.0;
  case KernelKind::exponential: return weight_ * 2.0 * d * s2;
  case KernelKind::cauchy: return inf;
  case KernelKind::tabulated: return std::nullopt;
  }
  return std::nullopt;
}

std::optional<double> Kernel::support_half_width() const {
  if (kind_ == KernelKind::box)
    return scale_;
  if (kind_ == KernelKind::zero)
    return 0.0;
  return std::nullopt;
}

bool Kernel::is_probability_density() const {
  if (kind_ == KernelKind::tabulated) {
    double sum = 0.0;
    for (const auto &v : table_->values) {
      if (v.real() < -1e-14 || std::abs(v.imag()) > 1e-14)
        return false;
      sum += v.real();
    }
    return std::abs(sum * table_->grid.cell_volume() - 1.0) < 1e-8;
  }
  return kind_ != KernelKind::zero && std::abs(weight_ - 1.0) < 1e-14;
}

nlohmann::json Kernel::describe() const {
  if (kind_ == KernelKind::tabulated) {
    nlohmann::json j{{"name", "tabulated"}};
    if (source_)
      j["file"] = source_->string();
    const Grid &g = table_->grid;
    j["table_grid"] = {{"dim", g.dim()}, {"half_width", g.half_width()},
                       {"points", g.points_per_dim()}};
    return j;
  }
  if (kind_ == KernelKind::zero)
    return {{"name", "zero"}};
  return {{"name", name()}, {"scale", scale_}, {"weight", weight_}};
}

Kernel Kernel::from_json(const nlohmann::json &j, int dim, const std::filesystem::path &base_dir) {
  if (j.is_string())
    return builtin(dim, j.get<std::string>());
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
    throw ConfigError("kernel must be a name or an object with a 'name'");
  const auto name = j["name"].get<std::string>();
  if (name == "tabulated") {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "name" && it.key() != "file" && it.key() != "allow_asymmetric" &&
          it.key() != "table_grid")
        throw ConfigError("unknown key '" + it.key() + "' for tabulated kernel");
    if (!j.contains("file") || !j["file"].is_string())
      throw ConfigError("tabulated kernel needs a 'file'");
    Kernel k = from_file(resolve(j["file"].get<std::string>(), base_dir),
                         j.value("allow_asymmetric", false));
    if (k.dim() != dim)
      throw ConfigError("kernel table dimension does not match the grid");
    return k;
  }
  try {
    return builtin(dim, name, params_from_json(j, {"scale", "weight"}, "kernel " + name));
  } catch (const UsageError &e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Potential

Potential Potential::zero(int dim) {
  check_dim(dim);
  return Potential(dim, PotentialKind::zero);
}

Potential Potential::constant(int dim, double value) {
  check_dim(dim);
  check_finite(value, "constant potential");
  Potential p(dim, PotentialKind::constant);
  p.params_ = {{"value", value}};
  p.set_bounds_from_metadata();
  return p;
}

Potential Potential::power_tail(int dim, double amplitude, double gamma) {
  check_dim(dim);
  check_finite(amplitude, "amplitude");
  check_positive(gamma, "power tail exponent");
  Potential p(dim, PotentialKind::power_tail);
  p.params_ = {{"amplitude", amplitude}, {"gamma", gamma}};
  p.set_bounds_from_metadata();
  return p;
}

Potential Potential::gaussian_bump(int dim, double amplitude, double scale) {
  check_dim(dim);
  check_finite(amplitude, "amplitude");
  check_positive(scale, "bump scale");
  Potential p(dim, PotentialKind::gaussian_bump);
  p.params_ = {{"amplitude", amplitude}, {"scale", scale}};
  p.set_bounds_from_metadata();
  return p;
}

Potential Potential::box(int dim, double amplitude, double half_width, Point center) {
  check_dim(dim);
  check_finite(amplitude, "amplitude");
  check_positive(half_width, "box half width");
  Potential p(dim, PotentialKind::box);
  p.params_ = {{"amplitude", amplitude}, {"half_width", half_width}};
  p.center_ = center;
  p.set_bounds_from_metadata();
  return p;
}

Potential Potential::rational_peak(int dim, double amplitude, double exponent) {
  check_dim(dim);
  check_finite(amplitude, "amplitude");
  check_positive(exponent, "peak exponent");
  Potential p(dim, PotentialKind::rational_peak);
  p.params_ = {{"amplitude", amplitude}, {"exponent", exponent}};
  p.set_bounds_from_metadata();
  return p;
}

Potential Potential::clipped_power(int dim, double amplitude, double gamma, double core) {
  check_dim(dim);
  check_finite(amplitude, "amplitude");
  check_positive(gamma, "clipped power exponent");
  check_positive(core, "clipped power core radius");
  Potential p(dim, PotentialKind::clipped_power);
  p.params_ = {{"amplitude", amplitude}, {"gamma", gamma}, {"core", core}};
  p.set_bounds_from_metadata();
  return p;
}

Potential Potential::tabulated(GridFunction samples) {
  if (samples.space != Space::physical)
    throw UsageError("potential table must hold physical-space samples");
  Potential p(samples.grid.dim(), PotentialKind::tabulated);
  double lo = 0.0, hi = 0.0;
  for (const auto &v : samples.values) {
    if (!std::isfinite(v.real()))
      throw UsageError("potential table holds non-finite values");
    if (std::abs(v.imag()) > 0.0)
      throw UsageError("potential must be real");
    lo = std::min(lo, v.real());
    hi = std::max(hi, v.real());
  }
  p.v_min_ = lo;
  p.v_max_ = hi;
  p.table_ = std::move(samples);
  return p;
}

Potential Potential::from_file(const std::filesystem::path &path) {
  Potential p = tabulated(read_samples(path));
  p.source_ = path;
  return p;
}

Potential Potential::sum(const Potential &first, const Potential &second) {
  if (first.dim() != second.dim())
    throw UsageError("potential dimensions differ");
  Potential p(first.dim(), PotentialKind::sum);
  p.terms_ = {std::make_shared<const Potential>(first), std::make_shared<const Potential>(second)};
  // Bounds from dense sampling, never outside the termwise bounds.
  const Grid g = default_sampling_grid(p.dim_);
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = p(g.node(i));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // The peaks of the terms may fall between sampling nodes.
  for (const auto &t : p.terms_)
    if (auto peak = t->argmax()) {
      const double v = p(*peak);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  p.v_min_ = std::max(lo, first.v_min() + second.v_min());
  p.v_max_ = std::min(hi, first.v_max() + second.v_max());
  return p;
}

Potential Potential::builtin(int dim, const std::string &name, const Params &params, Point center) {
  auto allow = [&](std::vector<std::string> keys) {
    for (const auto &[key, _] : params)
      if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw ConfigError("unknown parameter '" + key + "' for potential " + name);
  };
  const double amp = get_or(params, "amplitude", 1.0);
  Potential p = zero(dim);
  if (name == "zero") {
    allow({});
  } else if (name == "constant") {
    allow({"value"});
    p = constant(dim, get_or(params, "value", 0.0));
  } else if (name == "power_tail" || name == "stretched_tail") {
    allow({"amplitude", "gamma"});
    p = power_tail(dim, amp, get_or(params, "gamma", 1.0));
  } else if (name == "gaussian_bump") {
    allow({"amplitude", "scale"});
    p = gaussian_bump(dim, amp, get_or(params, "scale", 1.0));
  } else if (name == "box") {
    allow({"amplitude", "half_width"});
    p = box(dim, amp, get_or(params, "half_width", 1.0));
  } else if (name == "rational_peak") {
    allow({"amplitude", "exponent"});
    p = rational_peak(dim, amp, get_or(params, "exponent", 2.0));
  } else if (name == "clipped_power") {
    allow({"amplitude", "gamma", "core"});
    p = clipped_power(dim, amp, get_or(params, "gamma", 1.0), get_or(params, "core", 1.0));
  } else {
    throw ConfigError("unknown potential '" + name + "'");
  }
  p.center_ = center;
  return p;
}

void Potential::set_bounds_from_metadata() {
  double peak = 0.0;
  switch (kind_) {
  case PotentialKind::zero:
    break;
  case PotentialKind::constant:
    peak = param("value");
    break;
  default:
    peak = param("amplitude");
  }
  v_min_ = std::min(0.0, peak);
  v_max_ = std::max(0.0, peak);
}

double Potential::param(const std::string &key) const {
  auto it = params_.find(key);
  if (it == params_.end())
    throw UsageError("potential has no parameter '" + key + "'");
  return it->second;
}

double Potential::operator()(const Point &x) const {
  const Point y = minus(x, center_);
  switch (kind_) {
  case PotentialKind::zero:
    return 0.0;
  case PotentialKind::constant:
    return params_.at("value");
  case PotentialKind::power_tail:
    return params_.at("amplitude") * std::pow(1.0 + norm2(y, dim_), -params_.at("gamma"));
  case PotentialKind::gaussian_bump: {
    const double s = params_.at("scale");
    const double r = norm2(y, dim_);
    return params_.at("amplitude") * std::exp(-r * r / (s * s));
  }
  case PotentialKind::box:
    return inf_norm(y, dim_) <= params_.at("half_width") ? params_.at("amplitude") : 0.0;
  case PotentialKind::rational_peak:
    return params_.at("amplitude") / (1.0 + std::pow(norm2(y, dim_), params_.at("exponent")));
  case PotentialKind::clipped_power: {
    const double r = norm2(y, dim_) / params_.at("core");
    return params_.at("amplitude") * (r <= 1.0 ? 1.0 : std::pow(r, -params_.at("gamma")));
  }
  case PotentialKind::tabulated: {
    auto node = nearest_node(table_->grid, y);
    return node ? table_->values[*node].real() : 0.0;
  }
  case PotentialKind::sum:
    return (*terms_[0])(y) + (*terms_[1])(y);
  }
  return 0.0;
}

std::string Potential::name() const {
  switch (kind_) {
  case PotentialKind::zero: return "zero";
  case PotentialKind::constant: return "constant";
  case PotentialKind::power_tail: return "power_tail";
  case PotentialKind::gaussian_bump: return "gaussian_bump";
  case PotentialKind::box: return "box";
  case PotentialKind::rational_peak: return "rational_peak";
  case PotentialKind::clipped_power: return "clipped_power";
  case PotentialKind::tabulated: return "tabulated";
  case PotentialKind::sum: return "sum";
  }
  return "unknown";
}

Potential Potential::translated(const Point &shift) const {
  Potential p = *this;
  for (int a = 0; a < dim_; ++a)
    p.center_[a] += shift[a];
  return p;
}

std::optional<IntervalUnion> Potential::exact_essential_range() const {
  switch (kind_) {
  case PotentialKind::zero:
    return IntervalUnion::point(0.0);
  case PotentialKind::power_tail:
  case PotentialKind::gaussian_bump:
  case PotentialKind::rational_peak:
  case PotentialKind::clipped_power:
    return IntervalUnion::closed(v_min_, v_max_);
  case PotentialKind::box:
    return IntervalUnion::point(0.0).unite(IntervalUnion::point(param("amplitude")));
  default:
    return std::nullopt;
  }
}

std::optional<Point> Potential::argmax() const {
  switch (kind_) {
  case PotentialKind::power_tail:
  case PotentialKind::gaussian_bump:
  case PotentialKind::rational_peak:
  case PotentialKind::clipped_power:
  case PotentialKind::box:
    if (param("amplitude") > 0.0)
      return center_;
    return std::nullopt;
  default:
    return std::nullopt;
  }
}

std::optional<double> Potential::support_measure() const {
  if (kind_ == PotentialKind::box)
    return std::pow(2.0 * param("half_width"), dim_);
  if (kind_ == PotentialKind::zero)
    return 0.0;
  return std::nullopt;
}

Potential Potential::with_decay(DecayHypothesis hyp) const {
  if (hyp.side == DecaySide::symbol_near_zero || hyp.side == DecaySide::symbol_at_infinity)
    throw UsageError("a potential can only carry a spatial decay hypothesis");
  Potential p = *this;
  p.decay_ = hyp;
  return p;
}

nlohmann::json Potential::describe() const {
  nlohmann::json j{{"name", name()}};
  if (kind_ == PotentialKind::sum) {
    j["terms"] = {terms_[0]->describe(), terms_[1]->describe()};
  } else if (kind_ == PotentialKind::tabulated) {
    if (source_)
      j["file"] = source_->string();
    const Grid &g = table_->grid;
    j["table_grid"] = {{"dim", g.dim()}, {"half_width", g.half_width()},
                       {"points", g.points_per_dim()}};
  } else {
    for (const auto &[k, v] : params_)
      j[k] = v;
  }
  if (center_ != Point{0, 0, 0})
    j["center"] = point_json(center_, dim_);
  if (decay_)
    j["decay"] = decay_to_json(*decay_);
  return j;
}

Potential Potential::from_json(const nlohmann::json &j, int dim,
                               const std::filesystem::path &base_dir) {
  if (j.is_string())
    return builtin(dim, j.get<std::string>());
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
    throw ConfigError("potential must be a name or an object with a 'name'");
  const auto name = j["name"].get<std::string>();
  Point center{0, 0, 0};
  if (j.contains("center"))
    center = point_from_json(j["center"], dim);
  Potential p = zero(dim);
  try {
    if (name == "sum") {
      for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "name" && it.key() != "terms" && it.key() != "center" &&
            it.key() != "decay")
          throw ConfigError("unknown key '" + it.key() + "' for sum potential");
      if (!j.contains("terms") || !j["terms"].is_array() || j["terms"].size() != 2)
        throw ConfigError("sum potential needs exactly two 'terms'");
      p = sum(from_json(j["terms"][0], dim, base_dir), from_json(j["terms"][1], dim, base_dir))
              .translated(center);
    } else if (name == "tabulated") {
      for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "name" && it.key() != "file" && it.key() != "center" &&
            it.key() != "decay" && it.key() != "table_grid")
          throw ConfigError("unknown key '" + it.key() + "' for tabulated potential");
      if (!j.contains("file") || !j["file"].is_string())
        throw ConfigError("tabulated potential needs a 'file'");
      p = from_file(resolve(j["file"].get<std::string>(), base_dir)).translated(center);
      if (p.dim() != dim)
        throw ConfigError("potential table dimension does not match the grid");
    } else {
      p = builtin(dim, name,
                  params_from_json(j, {"amplitude", "gamma", "scale", "half_width", "exponent",
                                       "core", "value"},
                                   "potential " + name),
                  center);
    }
    if (j.contains("decay"))
      p = p.with_decay(decay_from_json(j["decay"]));
  } catch (const UsageError &e) {
    throw ConfigError(e.what());
  }
  return p;
}

Grid default_sampling_grid(int dim) {
  check_dim(dim);
  switch (dim) {
  case 1: return Grid(1, 64.0, 1 << 16);
  case 2: return Grid(2, 32.0, 1024);
  default: return Grid(3, 16.0, 128);
  }
}

std::vector<std::pair<double, std::optional<double>>> vanishing_radii(const Potential &v,
                                                                      const Grid &grid) {
  std::vector<std::pair<double, std::optional<double>>> out;
  std::vector<double> radius(grid.size()), value(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Point x = grid.node(i);
    radius[i] = norm2(x, grid.dim());
    value[i] = std::abs(v(x));
  }
  for (double delta : {1e-1, 1e-2, 1e-3, 1e-4}) {
    double r = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (value[i] > delta)
        r = std::max(r, radius[i]);
    // Only radii strictly inside the inscribed ball leave sampled room beyond.
    if (r < grid.half_width() - grid.spacing())
      out.emplace_back(delta, r);
    else
      out.emplace_back(delta, std::nullopt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral constants

SpectralConstants make_constants(double a_min, double a_max, Point argmax_xi, double v_min,
                                 double v_max) {
  SpectralConstants c;
  c.a_min = a_min;
  c.a_max = a_max;
  c.argmax_xi = argmax_xi;
  c.v_min = v_min;
  c.v_max = v_max;
  c.mu0 = std::min(a_min, v_min);
  c.mu1 = std::max(a_max, v_max);
  return c;
}

SpectralConstants spectral_constants(const Kernel &kernel, const Potential &potential,
                                     double freq_cap, std::size_t samples, bool prefer_exact) {
  check_positive(freq_cap, "frequency cap");
  if (samples < 2)
    throw UsageError("spectral constants need at least 2 samples per axis");
  const int d = kernel.dim();
  if (potential.dim() != d)
    throw UsageError("kernel and potential dimensions differ");

  double lo = 0.0, hi = 0.0;
  Point arg{0, 0, 0};
  bool exact = false;
  if (prefer_exact) {
    if (auto r = kernel.exact_symbol_range()) {
      lo = r->lo;
      hi = r->hi;
      exact = true;
      // Builtin symbols peak (or bottom out, for negative weight) at the origin.
    }
  }
  if (!exact) {
    double cap = freq_cap;
    if (kernel.kind() == KernelKind::tabulated)
      cap = std::min(cap, kernel.table()->grid.nyquist());
    std::size_t total = 1;
    for (int a = 0; a < d; ++a)
      total *= samples;
    bool first = true;
    for (std::size_t flat = 0; flat < total; ++flat) {
      Point xi{0, 0, 0};
      std::size_t rest = flat;
      for (int a = 0; a < d; ++a) {
        const std::size_t i = rest % samples;
        rest /= samples;
        xi[a] = -cap + 2.0 * cap * static_cast<double>(i) / static_cast<double>(samples - 1);
      }
      const double v = kernel.symbol(xi);
      if (first || v > hi)
        arg = xi;
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
  }
  SpectralConstants c = make_constants(lo, hi, arg, potential.v_min(), potential.v_max());
  c.exact_symbol_bounds = exact;
  return c;
}

// ---------------------------------------------------------------------------
// Hypothesis checks

namespace {

template <typename Margin>
HypothesisReport radial_scan(int dim, double r0, double r1, bool include_end,
                             const SamplingSpec &spec, Margin &&margin) {
  if (spec.radial_points < 2)
    throw UsageError("sampling needs at least 2 radial points");
  HypothesisReport rep;
  rep.worst_margin = inf;
  const auto dirs = directions(dim, spec.directions);
  const std::size_t n = spec.radial_points;
  const double denom = static_cast<double>(include_end ? n - 1 : n);
  for (const auto &e : dirs) {
    for (std::size_t i = 0; i < n; ++i) {
      const double r = r0 + (r1 - r0) * static_cast<double>(i) / denom;
      const Point p{r * e[0], r * e[1], r * e[2]};
      const double m = margin(p, r);
      ++rep.samples;
      if (m < rep.worst_margin) {
        rep.worst_margin = m;
        rep.worst_location = p;
      }
    }
  }
  // Roundoff in the evaluated profiles is not a violation.
  rep.pass = rep.worst_margin >= -1e-12;
  rep.note = "sampled evidence on a finite set of radii and directions, not a proof";
  return rep;
}

double outer_radius(const SamplingSpec &spec, double q) {
  if (spec.outer_radius > 0.0) {
    if (spec.outer_radius <= q)
      throw UsageError("sampling outer radius must exceed the hypothesis threshold");
    return spec.outer_radius;
  }
  return std::max(10.0 * q, q + 100.0);
}

} // namespace

HypothesisReport check_hypothesis(const Kernel &kernel, const DecayHypothesis &hyp,
                                  const SamplingSpec &spec) {
  const int d = kernel.dim();
  if (hyp.side == DecaySide::symbol_near_zero) {
    const double a_max = spectral_constants(kernel, Potential::zero(d)).a_max;
    const double theta = std::min(hyp.threshold, spec.radius_cap);
    return radial_scan(d, 0.0, theta, true, spec, [&](const Point &xi, double r) {
      return kernel.symbol(xi) - (a_max - hyp.constant * std::pow(r, hyp.exponent));
    });
  }
  if (hyp.side == DecaySide::symbol_at_infinity) {
    const double q = hyp.threshold;
    return radial_scan(d, q, outer_radius(spec, q), true, spec, [&](const Point &xi, double r) {
      return kernel.symbol(xi) - hyp.constant * std::pow(r, -hyp.exponent);
    });
  }
  throw UsageError(std::string("hypothesis side ") + to_string(hyp.side) +
                   " needs a potential, not a kernel");
}

HypothesisReport check_hypothesis(const Potential &potential, const DecayHypothesis &hyp,
                                  const SamplingSpec &spec) {
  const int d = potential.dim();
  const Point c = potential.center();
  auto at = [&](const Point &x) {
    return potential(Point{x[0] + c[0], x[1] + c[1], x[2] + c[2]});
  };
  if (hyp.side == DecaySide::potential_at_infinity) {
    const double q = hyp.threshold;
    return radial_scan(d, q, outer_radius(spec, q), true, spec, [&](const Point &x, double r) {
      return at(x) - hyp.constant * std::pow(r, -hyp.exponent);
    });
  }
  if (hyp.side == DecaySide::potential_near_zero) {
    const double v_max = potential.v_max();
    const double theta = std::min(hyp.threshold, spec.radius_cap);
    return radial_scan(d, 0.0, theta, false, spec, [&](const Point &x, double r) {
      return at(x) - (v_max - hyp.constant * std::pow(r, hyp.exponent));
    });
  }
  throw UsageError(std::string("hypothesis side ") + to_string(hyp.side) +
                   " needs a kernel, not a potential");
}

// ---------------------------------------------------------------------------
// Moments

namespace {

// Midpoint rule for int_{[-R,R]^d} |x|^2 a(x) dx.
double moment_on_cube(const Kernel &k, double radius, std::size_t points) {
  const int d = k.dim();
  const double h = 2.0 * radius / static_cast<double>(points);
  std::size_t total = 1;
  for (int a = 0; a < d; ++a)
    total *= points;
  double acc = 0.0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    Point x{0, 0, 0};
    std::size_t rest = flat;
    for (int a = 0; a < d; ++a) {
      x[a] = -radius + h * (static_cast<double>(rest % points) + 0.5);
      rest /= points;
    }
    const double r = norm2(x, d);
    acc += r * r * k.value(x);
  }
  return acc * std::pow(h, d);
}

double moment_on_table(const GridFunction &t, double radius) {
  const Grid &g = t.grid;
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point x = g.node(i);
    if (inf_norm(x, g.dim()) > radius)
      continue;
    const double r = norm2(x, g.dim());
    acc += r * r * t.values[i].real();
  }
  return acc * g.cell_volume();
}

} // namespace

MomentResult second_moment(const Kernel &kernel, const MomentQuadrature &quad) {
  MomentResult res;
  if (quad.use_exact) {
    if (auto m = kernel.exact_second_moment()) {
      res.from_metadata = true;
      res.value = *m;
      res.divergent = !std::isfinite(*m);
      res.tail_fraction = res.divergent ? 1.0 : 0.0;
      return res;
    }
  }
  check_positive(quad.radius, "moment truncation radius");
  double full = 0.0, half = 0.0;
  if (kernel.kind() == KernelKind::tabulated) {
    const double r = std::min(quad.radius, kernel.table()->grid.half_width());
    full = moment_on_table(*kernel.table(), r);
    half = moment_on_table(*kernel.table(), 0.5 * r);
  } else {
    std::size_t pts = quad.points;
    if (kernel.dim() == 2)
      pts = std::min<std::size_t>(pts, 1024);
    else if (kernel.dim() == 3)
      pts = std::min<std::size_t>(pts, 128);
    pts += pts % 2;
    // A compact support box is integrated exactly up to its edge, so the
    // jump does not cost a first-order error.
    const auto support = kernel.support_half_width();
    const double reach = support ? std::min(quad.radius, *support) : quad.radius;
    full = moment_on_cube(kernel, reach, pts);
    half = reach <= 0.5 * quad.radius ? full : moment_on_cube(kernel, 0.5 * quad.radius, pts);
  }
  res.value = full;
  res.tail_fraction = full != 0.0 ? std::abs(full - half) / std::abs(full) : 0.0;
  res.divergent = res.tail_fraction > quad.tail_tolerance;
  if (res.divergent)
    res.value = inf;
  return res;
}

DecayHypothesis hypothesis_from_moment(const Kernel &kernel, const MomentQuadrature &quad) {
  if (!kernel.is_probability_density())
    throw PrerequisiteError("moment bound needs a symmetric probability density");
  const MomentResult m = second_moment(kernel, quad);
  if (m.divergent)
    throw PrerequisiteError("second moment diverges; the quadratic symbol bound is unavailable");
  return DecayHypothesis(DecaySide::symbol_near_zero, 2.0, 0.5 * m.value, unbounded_threshold);
}

// ---------------------------------------------------------------------------
// Essential range

IntervalUnion essential_range(const Potential &potential, std::size_t bins, double eps,
                              const std::optional<Grid> &sampling, bool use_analytic) {
  if (bins < 8)
    throw UsageError("essential range needs at least 8 bins");
  check_positive(eps, "merge tolerance");
  if (use_analytic)
    if (auto r = potential.exact_essential_range())
      return r->unite(IntervalUnion::point(0.0));

  const Grid g = sampling ? *sampling : default_sampling_grid(potential.dim());
  std::vector<double> v(g.size());
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    v[i] = potential(g.node(i));
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  if (hi - lo <= 0.0)
    return IntervalUnion::point(0.0);

  // Each sample carries one cell volume, so any occupied bin meets the
  // one-cell mass threshold.
  struct Bin {
    std::size_t count = 0;
    double lo = inf;
    double hi = -inf;
  };
  std::vector<Bin> hist(bins);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double x : v) {
    auto b = static_cast<std::size_t>((x - lo) / width);
    b = std::min(b, bins - 1);
    hist[b].count++;
    hist[b].lo = std::min(hist[b].lo, x);
    hist[b].hi = std::max(hist[b].hi, x);
  }
  std::vector<Interval> runs;
  for (std::size_t b = 0; b < bins; ++b) {
    if (hist[b].count == 0)
      continue;
    const bool extends = b > 0 && hist[b - 1].count > 0;
    if (extends || (!runs.empty() && hist[b].lo - runs.back().hi <= eps))
      runs.back().hi = hist[b].hi;
    else
      runs.push_back({hist[b].lo, hist[b].hi});
  }
  // Fold the limit value 0 into a run within eps of it.
  for (auto &r : runs) {
    if (r.lo > 0.0 && r.lo <= eps)
      r.lo = 0.0;
    if (r.hi < 0.0 && r.hi >= -eps)
      r.hi = 0.0;
  }
  runs.push_back({0.0, 0.0});
  return IntervalUnion(std::move(runs));
}

} // namespace nlspec
