#include "doctest.h"
#include "dmr/errors.hpp"
#include "dmr/gradcheck.hpp"

using namespace dmr;

namespace {

const GradientGroupReport& group(const GradientCheckReport& r, const std::string& name) {
  for (const auto& g : r.groups)
    if (g.group == name) return g;
  FAIL("missing group " << name);
  return r.groups.front();
}

}  // namespace

TEST_CASE("analytic gradients match finite differences in every mode") {
  for (auto mode : {TrainingMode::vanilla, TrainingMode::dmr, TrainingMode::dmr_hcr}) {
    auto c = tiny_config();
    c.mode = mode;
    c.alpha = 0.3;
    c.beta = 0.7;
    const auto r = gradient_check(c, 1e-4);
    CHECK(r.passed);
    CHECK(r.groups.size() == 6);
    for (const auto& g : r.groups) {
      CAPTURE(g.group);
      CHECK(g.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("gradients stay correct with hidden-free encoders and other activations") {
  for (auto act : {Activation::identity, Activation::relu}) {
    auto c = tiny_config();
    c.model.hidden = 0;
    c.model.activation = act;
    CHECK(gradient_check(c, 1e-4).passed);
  }
}

TEST_CASE("a zero sigma head still checks") {
  auto c = tiny_config();
  GradientCheckOptions o;
  o.prepare = [](ModelParameters& p) {
    p.sigma_head.weight.setZero();
    p.sigma_head.gamma.setZero();
    p.sigma_head.beta.setZero();
  };
  const auto r = gradient_check(c, 1e-4, o);
  CHECK(r.passed);
}

TEST_CASE("a corrupted gradient is caught in its own group") {
  GradientCheckOptions o;
  o.corrupt = [](ModelParameters& g) { g.fusion.weight(0, 0) += 0.05; };
  const auto r = gradient_check(tiny_config(), 1e-4, o);
  CHECK_FALSE(r.passed);
  CHECK(group(r, "fusion").max_relative_error > 1e-4);
  CHECK(group(r, "classifier").max_relative_error < 1e-4);
}

TEST_CASE("a negated gradient group fails the check") {
  GradientCheckOptions o;
  o.corrupt = [](ModelParameters& g) { g.classifier = -g.classifier; };
  const auto r = gradient_check(tiny_config(), 1e-4, o);
  CHECK_FALSE(r.passed);
  CHECK(group(r, "classifier").max_relative_error > 1.0);
}

TEST_CASE("large models are refused") {
  CHECK_THROWS_AS(gradient_check(standard_config(), 1e-4), InvalidInput);
}
