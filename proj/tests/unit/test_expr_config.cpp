#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sdelab/config.hpp"
#include "sdelab/errors.hpp"
#include "sdelab/expr.hpp"

using namespace sdelab;

TEST_CASE("expression evaluation") {
  const double t = 0.7;
  CHECK(Expr::parse("1 + 2 * 3").eval(0) == 7.0);
  CHECK(Expr::parse("-t^2").eval(3) == -9.0);
  CHECK(Expr::parse("2^3^2").eval(0) == 512.0);
  CHECK(Expr::parse("-4 - 1*t*sin(t)").eval(t) == -4.0 - t * std::sin(t));
  CHECK(Expr::parse("sqrt(2*cos(t))*exp(-4*t + t*cos(t))").eval(t) ==
        doctest::Approx(std::sqrt(2 * std::cos(t)) * std::exp(-4 * t + t * std::cos(t))));
  CHECK(Expr::parse("pi").eval(0) == std::numbers::pi);
  CHECK(Expr::parse("abs(log(t)) + tan(t) / 2").eval(t) == doctest::Approx(std::abs(std::log(t)) + std::tan(t) / 2));
  CHECK(Expr::parse("1e-3 * 2.5E2").eval(0) == doctest::Approx(0.25));
  CHECK(Expr::parse("0").is_constant_zero());
  CHECK_FALSE(Expr::parse("t").is_constant_zero());
}

TEST_CASE("canonical rendering round-trips") {
  for (const char* s : {"-4 - 1*t*sin(t)", "2^-t", "(t+1)/(t-2)", "exp(-t)*cos(3*t)"}) {
    const Expr e = Expr::parse(s);
    const Expr r = Expr::parse(e.to_string());
    for (double t : {0.0, 0.3, 1.7, -2.2}) CHECK(r.eval(t) == e.eval(t));
  }
}

TEST_CASE("expression errors name the column") {
  CHECK_THROWS_AS(Expr::parse("1 +"), ArgumentError);
  CHECK_THROWS_AS(Expr::parse("foo(t)"), ArgumentError);
  CHECK_THROWS_AS(Expr::parse("(t"), ArgumentError);
  CHECK_THROWS_AS(Expr::parse("t t"), ArgumentError);
  try {
    Expr::parse("1 + * 2");
    FAIL("no throw");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("column") != std::string::npos);
  }
}

TEST_CASE("matrix functions") {
  const auto m = MatrixFunction::parse("[[-1, t], [0, 1]]", 2);
  CHECK(m.eval(2.0) == Matrix{{-1, 2}, {0, 1}});
  CHECK(MatrixFunction::parse("0.05", 2).eval(0) == 0.05 * Matrix::identity(2));
  CHECK(MatrixFunction::zero(3).is_zero());
  CHECK(MatrixFunction::parse("[[0, 0], [0, 0]]", 2).is_zero());
  CHECK_FALSE(m.is_zero());
  CHECK(MatrixFunction::constant(Matrix{{1, 2}, {3, 4}}).eval(9) == Matrix{{1, 2}, {3, 4}});
  CHECK_THROWS_AS(MatrixFunction::parse("[[1, 2], [3]]", 2), ArgumentError);
  CHECK_THROWS_AS(MatrixFunction::parse("[[1, 2], [3, 4]]", 3), ArgumentError);
  CHECK_THROWS_AS(MatrixFunction::parse("[[1]]", 0), ArgumentError);
}

TEST_CASE("config parsing") {
  const auto cfg = ConfigFile::parse(
      "# comment\n"
      "dim = 2\n"
      "\n"
      "A = \"[[-1, 0], [0, 1]]\"  # trailing\n"
      "dt = 1e-3\n"
      "flag = true\n"
      "name = \"a \\\"quoted\\\" \\\\ word\"\n");
  CHECK(cfg.get_int("dim") == 2);
  CHECK(cfg.get_double("dt") == 1e-3);
  CHECK(cfg.get_bool("flag") == true);
  CHECK(cfg.get_string("A") == "[[-1, 0], [0, 1]]");
  CHECK(cfg.get_string("name") == "a \"quoted\" \\ word");
  CHECK(cfg.find("A")->line == 4);
  CHECK(cfg.find("A")->quoted);
  CHECK_FALSE(cfg.has("missing"));
  CHECK_FALSE(cfg.get_double("missing").has_value());
}

TEST_CASE("config errors carry line numbers") {
  auto line_of = [](const char* text) {
    try {
      ConfigFile::parse(text);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("a = 1\n[table]\n") == 2);
  CHECK(line_of("a = 1\nb\n") == 2);
  CHECK(line_of("a = 1\na = 2\n") == 2);
  CHECK(line_of("\n\nx = \"open\n") == 3);
  CHECK(line_of("x = [1, 2]\n") == 1);
  const auto cfg = ConfigFile::parse("a = 1\nb = \"s\"\nc = x1\n");
  CHECK_THROWS_AS(cfg.get_double("b"), ConfigError);
  CHECK_THROWS_AS(cfg.get_double("c"), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("a"), ConfigError);
  try {
    cfg.require_known({"a", "b"});
    FAIL("no throw");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(ConfigFile::load("/nonexistent/config.toml"), IoError);
}

TEST_CASE("overrides replace values") {
  auto cfg = ConfigFile::parse("seed = 1\n");
  cfg.set("seed", "5", false);
  cfg.set("out", "dir", true);
  CHECK(cfg.get_uint("seed") == 5u);
  CHECK(cfg.get_string("out") == "dir");
}
