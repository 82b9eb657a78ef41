#include "sdelab/coefficients.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "sdelab/errors.hpp"

namespace sdelab {

bool Interval::contains(double t) const noexcept {
  if (!std::isfinite(t)) return false;
  switch (kind) {
    case Kind::RightHalfLine: return t >= t0;
    case Kind::LeftHalfLine: return t <= t0;
    case Kind::WholeLine: return true;
  }
  return false;
}

Interval Interval::parse(std::string_view text) {
  const std::size_t colon = text.find(':');
  const std::string_view tag = text.substr(0, colon);
  Interval iv;
  if (tag == "right") iv.kind = Kind::RightHalfLine;
  else if (tag == "left") iv.kind = Kind::LeftHalfLine;
  else if (tag == "whole") iv.kind = Kind::WholeLine;
  else throw ArgumentError("interval must be right:<t0>, left:<t0> or whole:<t0>, got '" + std::string(text) + "'");
  if (colon != std::string_view::npos) {
    const std::string_view num = text.substr(colon + 1);
    const char* first = num.data();
    const char* last = first + num.size();
    auto [ptr, ec] = std::from_chars(first, last, iv.t0);
    if (ec != std::errc() || ptr != last || num.empty())
      throw ArgumentError("bad interval anchor in '" + std::string(text) + "'");
  }
  return iv;
}

std::string Interval::to_string() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind) {
    case Kind::RightHalfLine: os << "right:"; break;
    case Kind::LeftHalfLine: os << "left:"; break;
    case Kind::WholeLine: os << "whole:"; break;
  }
  os << t0;
  return os.str();
}

void CoefficientSpec::validate() const {
  if (dim == 0) throw ArgumentError("dim must be >= 1");
  auto check = [&](const MatrixFunction& f, const char* name) {
    if (f.dim() != dim)
      throw ArgumentError(std::string("coefficient ") + name + " has dimension " + std::to_string(f.dim()) +
                          ", expected " + std::to_string(dim));
  };
  check(A, "A");
  check(G, "G");
  if (B) check(*B, "B");
  if (H) check(*H, "H");
  for (double v : {a_bound, g_bound, b_bound, h_bound, eps_decay})
    if (!(v >= 0.0)) throw ArgumentError("coefficient bounds and eps_decay must be nonnegative");
}

const std::vector<std::string>& CoefficientSpec::config_keys() {
  static const std::vector<std::string> keys = {"dim",     "interval", "A",       "G",       "B",        "H",
                                                "a_bound", "g_bound",  "b_bound", "h_bound", "eps_decay"};
  return keys;
}

CoefficientSpec CoefficientSpec::from_config(const ConfigFile& cfg) {
  CoefficientSpec spec;
  const auto dim = cfg.get_int("dim");
  if (!dim) throw ConfigError("missing required key 'dim'", 0);
  if (*dim < 1) throw ConfigError("dim must be >= 1", cfg.find("dim")->line);
  spec.dim = static_cast<std::size_t>(*dim);

  auto matrix = [&](const char* key) -> std::optional<MatrixFunction> {
    const auto* e = cfg.find(key);
    if (!e) return std::nullopt;
    if (!e->quoted) throw ConfigError(std::string("'") + key + "' must be a quoted expression", e->line);
    try {
      return MatrixFunction::parse(e->value, spec.dim);
    } catch (const ArgumentError& err) {
      throw ConfigError(err.what(), e->line);
    }
  };

  auto a = matrix("A");
  if (!a) throw ConfigError("missing required key 'A'", 0);
  spec.A = *a;
  spec.G = matrix("G").value_or(MatrixFunction::zero(spec.dim));
  spec.B = matrix("B");
  spec.H = matrix("H");

  if (const auto* e = cfg.find("interval")) {
    try {
      spec.interval = Interval::parse(e->value);
    } catch (const ArgumentError& err) {
      throw ConfigError(err.what(), e->line);
    }
  }
  spec.a_bound = cfg.get_double("a_bound").value_or(0.0);
  spec.g_bound = cfg.get_double("g_bound").value_or(0.0);
  spec.b_bound = cfg.get_double("b_bound").value_or(0.0);
  spec.h_bound = cfg.get_double("h_bound").value_or(0.0);
  spec.eps_decay = cfg.get_double("eps_decay").value_or(0.0);
  try {
    spec.validate();
  } catch (const ArgumentError& err) {
    throw ConfigError(err.what(), 0);
  }
  return spec;
}

Matrix eval(const CoefficientSpec& spec, Coefficient which, double t) {
  if (!spec.interval.contains(t)) {
    std::ostringstream os;
    os.precision(17);
    os << "t = " << t << " lies outside interval " << spec.interval.to_string();
    throw DomainError(os.str());
  }
  switch (which) {
    case Coefficient::A: return spec.A.eval(t);
    case Coefficient::G: return spec.G.eval(t);
    case Coefficient::B:
      if (!spec.B) throw AbsentCoefficientError("perturbation B is absent");
      return spec.B->eval(t);
    case Coefficient::H:
      if (!spec.H) throw AbsentCoefficientError("perturbation H is absent");
      return spec.H->eval(t);
    case Coefficient::Btilde: {
      Matrix bt = spec.B ? spec.B->eval(t) : Matrix::zeros(spec.dim);
      if (spec.H) bt -= spec.G.eval(t) * spec.H->eval(t);
      return bt;
    }
  }
  return {};
}

Matrix drift(const CoefficientSpec& spec, bool perturbed, double t) {
  Matrix m = eval(spec, Coefficient::A, t);
  if (perturbed && spec.B) m += spec.B->eval(t);
  return m;
}

Matrix diffusion(const CoefficientSpec& spec, bool perturbed, double t) {
  Matrix m = eval(spec, Coefficient::G, t);
  if (perturbed && spec.H) m += spec.H->eval(t);
  return m;
}

BoundReport verify_bounds(const CoefficientSpec& spec, std::span<const double> sample_grid) {
  if (sample_grid.empty()) throw ArgumentError("verify_bounds needs a non-empty sample grid");
  for (double t : sample_grid)
    if (!spec.interval.contains(t)) throw DomainError("sample grid leaves the interval");

  BoundReport rep;
  auto scan = [&](const char* name, const MatrixFunction* f, auto envelope) {
    BoundReport::Entry e;
    e.name = name;
    e.present = f != nullptr;
    if (f) {
      for (double t : sample_grid) {
        const double norm = op_norm(f->eval(t));
        const double env = envelope(t);
        double ratio;
        if (norm == 0.0) ratio = 0.0;
        else if (env > 0.0) ratio = norm / env;
        else ratio = std::numeric_limits<double>::infinity();
        if (ratio > e.max_ratio || (e.max_ratio == 0.0 && ratio == 0.0 && t == sample_grid.front())) {
          e.max_ratio = ratio;
          e.worst_time = t;
        }
      }
    }
    if (e.max_ratio > 1.0 + 1e-9) rep.violation = true;
    rep.entries.push_back(e);
  };
  scan("A", &spec.A, [&](double) { return spec.a_bound; });
  scan("G", &spec.G, [&](double) { return spec.g_bound; });
  scan("B", spec.B ? &*spec.B : nullptr, [&](double t) { return spec.b_bound * std::exp(-spec.eps_decay * std::abs(t)); });
  scan("H", spec.H ? &*spec.H : nullptr, [&](double t) { return spec.h_bound * std::exp(-spec.eps_decay * std::abs(t)); });
  return rep;
}

}  // namespace sdelab
