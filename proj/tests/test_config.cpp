#include <doctest.h>

#include "ddpc/config.hpp"

using namespace ddpc;

TEST_CASE("empty config keeps defaults") {
  ExperimentConfig cfg = parse_config("");
  CHECK(cfg.regime == Regime::Weak);
  CHECK(cfg.n_train == 150);
  CHECK(cfg.n_test == 150);
  CHECK(cfg.n_mc == 500);
  CHECK(cfg.sigma_w2 == 0.01);
  CHECK(cfg.sigma_v2 == 0.01);
  CHECK(cfg.mpc.horizons.Lp == 10);
  CHECK(cfg.mpc.horizons.Lf == 15);
  CHECK(cfg.arx.na == 10);
  CHECK(cfg.arx.nb == 10);
  CHECK(cfg.arx.include_feedthrough == false);
  CHECK(cfg.mpc.output_mode == OutputConstraintMode::Soft);
  CHECK(cfg.kernel_family == KernelFamily::SS);
  CHECK(cfg.variants.size() == 5);
}

TEST_CASE("full round-trip parse of every section") {
  std::string text =
      "[noise]\n"
      "sigma_w2 = 0.02\n"
      "sigma_v2 = 0.005\n"
      "[horizons]\n"
      "lp = 6\n"
      "lf = 8\n"
      "[arx]\n"
      "na = 5\n"
      "nb = 4\n"
      "include_feedthrough = true\n"
      "[kernel]\n"
      "family = tc\n"
      "[mpc]\n"
      "q_weight = 2\n"
      "r_weight = 0.5\n"
      "u_lo = -1.5\n"
      "u_hi = 1.5\n"
      "y_lo = -3\n"
      "y_hi = 3\n"
      "output_mode = hard\n"
      "soft_penalty = 100\n"
      "[experiment]\n"
      "regime = informative\n"
      "variants = ols,ssw\n"
      "n_train = 99\n"
      "n_test = 44\n"
      "n_mc = 7\n"
      "mu = 3.5\n"
      "normalize_w = yes\n"
      "base_seed = 123\n";
  ExperimentConfig cfg = parse_config(text);
  CHECK(cfg.sigma_w2 == 0.02);
  CHECK(cfg.sigma_v2 == 0.005);
  CHECK(cfg.mpc.horizons.Lp == 6);
  CHECK(cfg.mpc.horizons.Lf == 8);
  CHECK(cfg.arx.na == 5);
  CHECK(cfg.arx.nb == 4);
  CHECK(cfg.arx.include_feedthrough);
  CHECK(cfg.kernel_family == KernelFamily::TC);
  CHECK(cfg.mpc.Q_weight == 2.0);
  CHECK(cfg.mpc.R_weight == 0.5);
  CHECK(cfg.mpc.u_lo == -1.5);
  CHECK(cfg.mpc.output_mode == OutputConstraintMode::Hard);
  CHECK(cfg.mpc.soft_penalty == 100.0);
  CHECK(cfg.regime == Regime::Informative);
  REQUIRE(cfg.variants.size() == 2);
  CHECK(cfg.variants[0] == Variant::OLS);
  CHECK(cfg.variants[1] == Variant::SSW);
  CHECK(cfg.n_train == 99);
  CHECK(cfg.n_test == 44);
  CHECK(cfg.n_mc == 7);
  CHECK(cfg.mu == 3.5);
  CHECK(cfg.normalize_w);
  CHECK(cfg.base_seed == 123);

  // serialize and re-parse: identical canonical form and hash
  ExperimentConfig back = parse_config(config_to_string(cfg));
  CHECK(config_to_string(back) == config_to_string(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("comments blanks and case-insensitive keys") {
  std::string text =
      "# leading comment\n"
      "\n"
      "[EXPERIMENT]\n"
      "; another comment\n"
      "  N_MC = 3  \n";
  ExperimentConfig cfg = parse_config(text);
  CHECK(cfg.n_mc == 3);
}

TEST_CASE("unknown section reports line number") {
  try {
    parse_config("[experiment]\nn_mc = 1\n[bogus]\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("unknown key reports line and section") {
  try {
    parse_config("[mpc]\nnot_a_key = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("not_a_key") != std::string::npos);
    CHECK(msg.find("[mpc]") != std::string::npos);
  }
}

TEST_CASE("malformed values throw") {
  CHECK_THROWS_AS(parse_config("[noise]\nsigma_w2 = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[experiment]\nn_mc = 2.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[arx]\ninclude_feedthrough = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[experiment]\nregime = sideways\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[experiment]\nvariants = ols,bogus\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[kernel]\nfamily = rbf\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("key_without_section = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[mpc]\nno equals sign\n"), ConfigError);
}

TEST_CASE("cross-field validation") {
  CHECK_THROWS_AS(parse_config("[horizons]\nlp = 0\n"), ConfigError);
  // ARX order must fit inside the past horizon
  CHECK_THROWS_AS(parse_config("[horizons]\nlp = 4\n[arx]\nna = 5\n"), ConfigError);
}

TEST_CASE("config hash is sensitive to every field") {
  ExperimentConfig base;
  std::uint64_t h0 = config_hash(base);
  ExperimentConfig a = base;
  a.n_mc += 1;
  CHECK(config_hash(a) != h0);
  ExperimentConfig b = base;
  b.sigma_w2 *= 2.0;
  CHECK(config_hash(b) != h0);
  ExperimentConfig c = base;
  c.regime = Regime::Informative;
  CHECK(config_hash(c) != h0);
  ExperimentConfig d = base;
  d.mu += 1.0;
  CHECK(config_hash(d) != h0);
}

TEST_CASE("load_config missing file") {
  CHECK_THROWS_AS(load_config("/nonexistent/path/config.ini"), ConfigError);
}
