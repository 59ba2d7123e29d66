#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

#include "biasengine/errors.hpp"
#include "biasengine/intermit.hpp"
#include "biasengine/json_io.hpp"
#include "biasengine/occupation.hpp"

using namespace biasengine;

namespace {

PriorityVector priorities(std::vector<std::pair<std::string, double>> entries) {
  return PriorityVector(std::move(entries));
}

PromptData collect(const SyntheticModel& model, std::size_t n) {
  PromptData data;
  data.init = model.generate({model.prompt_key(), {}, n});
  for (const auto& axis : model.axes()) {
    for (const auto& value : axis.values) {
      data.cf_sets[{axis.name, value}] =
          model.generate({model.prompt_key(), {{axis.name, value}}, n});
    }
  }
  return data;
}

}  // namespace

TEST_CASE("priority vector validation") {
  CHECK_NOTHROW(priorities({{"a", 0.7}, {"b", 0.3}}));
  CHECK_THROWS_AS(priorities({{"a", 0.7}, {"b", 0.4}}), ConfigError);
  CHECK_THROWS_AS(priorities({{"a", -0.2}, {"b", 1.2}}), ConfigError);
  CHECK_THROWS_AS(PriorityVector(std::vector<std::pair<std::string, double>>{}), ConfigError);
}

TEST_CASE("tau") {
  PriorityVector p = priorities({{"a", 0.7}, {"b", 0.3}});
  SUBCASE("zero bias vector") {
    std::vector<std::pair<std::string, double>> w = {{"a", 0.0}, {"b", 0.0}};
    CHECK(tau(w, p) == 0.0);
  }
  SUBCASE("full bias is 1 by convexity") {
    std::vector<std::pair<std::string, double>> w = {{"a", 1.0}, {"b", 1.0}};
    CHECK(tau(w, p) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("hand dot product") {
    std::vector<std::pair<std::string, double>> w = {{"a", 0.8}, {"b", 0.2}};
    CHECK(tau(w, p) == doctest::Approx(0.62).epsilon(1e-12));
  }
  SUBCASE("order mismatch is an error") {
    std::vector<std::pair<std::string, double>> w = {{"b", 0.2}, {"a", 0.8}};
    CHECK_THROWS_AS(tau(w, p), ConfigError);
  }
}

TEST_CASE("gamma_scores") {
  PriorityVector p = priorities({{"x", 0.7}, {"y", 0.3}});
  SUBCASE("zero matrix gives zero gammas") {
    IntersectionalityMatrix s({"a", "b"}, {"x", "y"}, {{0, 0}, {0, 0}}, {});
    for (const auto& [axis, gamma] : gamma_scores(s, p)) CHECK(gamma == 0.0);
  }
  SUBCASE("single-column matrix with unit priority returns the column") {
    PriorityVector single = priorities({{"x", 1.0}});
    IntersectionalityMatrix s({"a", "b"}, {"x"}, {{0.25}, {-0.5}}, {});
    auto gammas = gamma_scores(s, single);
    CHECK(gammas[0].second == doctest::Approx(0.25));
    CHECK(gammas[1].second == doctest::Approx(-0.5));
  }
  SUBCASE("hand computation") {
    IntersectionalityMatrix s({"a", "b"}, {"x", "y"}, {{0.5, 0.1}, {0.0, 0.9}}, {});
    auto gammas = gamma_scores(s, p);
    CHECK(gammas[0].second == doctest::Approx(0.38).epsilon(1e-12));
    CHECK(gammas[1].second == doctest::Approx(0.27).epsilon(1e-12));
  }
  SUBCASE("column mismatch is an error") {
    IntersectionalityMatrix s({"a"}, {"y", "x"}, {{0.1, 0.2}}, {});
    CHECK_THROWS_AS(gamma_scores(s, p), ConfigError);
  }
}

TEST_CASE("select_axis") {
  std::vector<std::pair<std::string, double>> gammas = {{"a", 0.38}, {"b", 0.27}};
  CHECK(select_axis(gammas, {}) == "a");
  CHECK(select_axis(gammas, {"a"}) == "b");
  CHECK(select_axis(gammas, {"a", "b"}) == std::nullopt);

  SUBCASE("ties break to the earlier canonical axis") {
    std::vector<std::pair<std::string, double>> tied = {{"a", 0.3}, {"b", 0.3}};
    CHECK(select_axis(tied, {}) == "a");
  }
  SUBCASE("argmax is invariant to positive scaling") {
    std::vector<std::pair<std::string, double>> scaled = {{"a", 3.8}, {"b", 2.7}};
    CHECK(select_axis(scaled, {}) == select_axis(gammas, {}));
  }
}

TEST_CASE("prompt_modification_plan") {
  AxisSet axes = occupation_axes();
  PromptSpec nurse{"nurse"};

  SUBCASE("one 2-value axis at N=48 gives a 50/50 split") {
    std::vector<std::string> mitigated = {"gender"};
    auto plan = prompt_modification_plan(nurse, axes, mitigated, 48);
    REQUIRE(plan.cells.size() == 2);
    CHECK(plan.cells[0].allocation == 24);
    CHECK(plan.cells[1].allocation == 24);
    CHECK(plan.cells[0].text == "A photo of a male nurse");
    CHECK(plan.cells[1].text == "A photo of a female nurse");
    CHECK_FALSE(plan.truncated);
  }
  SUBCASE("2x2 axes give 4 prompts x 12") {
    std::vector<std::string> mitigated = {"environment", "clothing"};
    auto plan = prompt_modification_plan(nurse, axes, mitigated, 48);
    REQUIRE(plan.cells.size() == 4);
    for (const auto& cell : plan.cells) CHECK(cell.allocation == 12);
    CHECK(plan.cells[0].text == "A photo of a nurse working indoors in formal attire");
    CHECK(plan.cells[0].constraints ==
          std::vector<Intervention>{{"environment", "indoors"}, {"clothing", "formal"}});
    CHECK(plan.cells[3].text == "A photo of a nurse working outdoors in informal attire");
  }
  SUBCASE("2x3 axes give 6 prompts x 8") {
    std::vector<std::string> mitigated = {"gender", "age"};
    auto plan = prompt_modification_plan(nurse, axes, mitigated, 48);
    REQUIRE(plan.cells.size() == 6);
    for (const auto& cell : plan.cells) CHECK(cell.allocation == 8);
    CHECK(plan.cells[0].text == "A photo of an old male nurse");
  }
  SUBCASE("indivisible budget differs by at most one") {
    std::vector<std::string> mitigated = {"gender", "age"};  // 6 cells
    auto plan = prompt_modification_plan(nurse, axes, mitigated, 50);
    std::size_t total = 0, low = 50, high = 0;
    for (const auto& cell : plan.cells) {
      total += cell.allocation;
      low = std::min(low, cell.allocation);
      high = std::max(high, cell.allocation);
    }
    CHECK(total == 50);
    CHECK(high - low <= 1);
  }
  SUBCASE("more cells than budget sets the truncation flag") {
    std::vector<std::string> mitigated = {"ethnicity", "emotion"};  // 24 cells
    auto plan = prompt_modification_plan(nurse, axes, mitigated, 10);
    CHECK(plan.truncated);
    std::size_t zeros = 0, total = 0;
    for (const auto& cell : plan.cells) {
      if (cell.allocation == 0) ++zeros;
      total += cell.allocation;
    }
    CHECK(total == 10);
    CHECK(zeros == 14);
  }
  SUBCASE("empty mitigation set is the base prompt") {
    auto plan = prompt_modification_plan(nurse, axes, {}, 48);
    REQUIRE(plan.cells.size() == 1);
    CHECK(plan.cells[0].text == "nurse");
    CHECK(plan.cells[0].allocation == 48);
  }
}

TEST_CASE("intermit_run on an already-fair model stops immediately") {
  AxisSet axes = coupled_demo_axes();
  SyntheticModel fair = independent_model(axes, "nurse");
  SyntheticProvider provider({fair});
  MitigationConfig cfg;
  cfg.ideals = IdealSet::uniform(axes);
  PriorityVector p = priorities({{"gender", 0.35}, {"age", 0.25}, {"clothing", 0.4}});
  std::vector<std::string> b_star = {"gender", "age", "clothing"};

  MitigationTrace trace = intermit_run({"nurse"}, axes, b_star, p, cfg, provider);
  CHECK(trace.steps.empty());
  CHECK(trace.reason == TerminationReason::threshold_met);
  CHECK(trace.final_tau == trace.initial_tau);
  CHECK(trace.initial_tau < cfg.epsilon);
  auto metrics = mitigation_metrics(trace);
  CHECK(metrics.mit_steps == 0.0);
  CHECK(metrics.mit_amt == trace.initial_tau);
}

TEST_CASE("intermit_run resolves the coupled demo scenario") {
  SyntheticModel model = coupled_demo_model();
  const AxisSet& axes = model.axes();
  SyntheticProvider provider({model});
  MitigationConfig cfg;
  cfg.ideals = IdealSet::uniform(axes);
  PriorityVector p = priorities({{"gender", 0.35}, {"age", 0.25}, {"clothing", 0.4}});
  std::vector<std::string> b_star = {"gender", "age", "clothing"};

  MitigationTrace trace = intermit_run({"nurse"}, axes, b_star, p, cfg, provider);

  CHECK(trace.reason == TerminationReason::threshold_met);
  CHECK(trace.final_tau < cfg.epsilon);
  CHECK(trace.steps.size() <= b_star.size());

  SUBCASE("no axis is selected twice") {
    std::vector<std::string> sorted = trace.mitigated_axes;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  }
  SUBCASE("every selection matches the oracle argmax") {
    oracles::TestJoint joint = oracles::TestJoint::from_model(model);
    std::vector<std::string> mitigated_so_far;
    std::vector<double> weights = {0.35, 0.25, 0.4};
    for (const auto& step : trace.steps) {
      auto oracle_gammas =
          oracles::oracle_state_gammas(joint, 48, mitigated_so_far, b_star, weights);
      // oracle argmax over unmitigated axes
      int best = -1;
      for (std::size_t i = 0; i < oracle_gammas.size(); ++i) {
        const std::string& name = axes.axes()[i].name;
        if (std::find(mitigated_so_far.begin(), mitigated_so_far.end(), name) !=
            mitigated_so_far.end()) {
          continue;
        }
        if (best < 0 || oracle_gammas[i] > oracle_gammas[static_cast<std::size_t>(best)]) {
          best = static_cast<int>(i);
        }
      }
      REQUIRE(best >= 0);
      CHECK(step.selected_axis == axes.axes()[static_cast<std::size_t>(best)].name);
      // gamma values agree with the oracle too
      for (std::size_t i = 0; i < oracle_gammas.size(); ++i) {
        CHECK(step.gamma_scores[i].second ==
              doctest::Approx(oracle_gammas[i]).epsilon(1e-9));
      }
      mitigated_so_far.push_back(step.selected_axis);
    }
  }
  SUBCASE("mitigated axes stay exactly uniform afterwards") {
    std::set<std::string> done;
    for (const auto& step : trace.steps) {
      done.insert(step.selected_axis);
      for (const auto& [axis, w] : step.per_axis_w) {
        if (done.count(axis)) CHECK(w == doctest::Approx(0.0).epsilon(1e-12));
      }
    }
  }
  SUBCASE("tau history is the documented two-step shape") {
    REQUIRE(trace.steps.size() == 2);
    CHECK(trace.steps[0].selected_axis == "gender");
    CHECK(trace.steps[1].selected_axis == "clothing");
    CHECK(trace.steps[0].tau_before > 0.7);
    CHECK(trace.steps[1].tau_after == doctest::Approx(trace.final_tau));
  }
}

TEST_CASE("intermit_run raises a worsen alert on the adversarial model") {
  SyntheticModel model = adversarial_demo_model();
  const AxisSet& axes = model.axes();
  SyntheticProvider provider({model});
  MitigationConfig cfg;
  cfg.ideals = IdealSet::uniform(axes);
  PriorityVector p = priorities({{"gender", 1.0}});
  std::vector<std::string> b_star = {"gender"};

  MitigationTrace trace = intermit_run({"athlete"}, axes, b_star, p, cfg, provider);
  CHECK(trace.reason == TerminationReason::threshold_met);
  REQUIRE(trace.steps.size() == 1);
  CHECK(trace.steps[0].selected_axis == "gender");
  CHECK(trace.steps[0].gamma_scores.empty());  // single-axis B* skips the matrix
  REQUIRE(trace.steps[0].alerts.size() == 1);
  CHECK(trace.steps[0].alerts[0].axis == "age");
  CHECK(trace.steps[0].alerts[0].after - trace.steps[0].alerts[0].before >
        cfg.worsen_delta);
}

TEST_CASE("intermit_run terminates via exhaustion when epsilon is unreachable") {
  SyntheticModel model = coupled_demo_model();
  const AxisSet& axes = model.axes();
  SyntheticProvider provider({model});
  MitigationConfig cfg;
  cfg.ideals = IdealSet::uniform(axes);
  // 50 images over 8 product cells cannot be even, so quantization keeps
  // tau above an unreachable epsilon even with every axis mitigated.
  cfg.epsilon = 1e-9;
  cfg.budget_n = 50;
  cfg.max_steps = 10;
  PriorityVector p = priorities({{"gender", 0.35}, {"age", 0.25}, {"clothing", 0.4}});
  std::vector<std::string> b_star = {"gender", "age", "clothing"};

  MitigationTrace trace = intermit_run({"nurse"}, axes, b_star, p, cfg, provider);
  CHECK(trace.reason == TerminationReason::exhausted);
  CHECK(trace.mitigated_axes.size() == axes.size());
  CHECK(trace.mit_steps_ratio == doctest::Approx(1.0));
}

TEST_CASE("intermit_run respects max_steps") {
  SyntheticModel model = coupled_demo_model();
  const AxisSet& axes = model.axes();
  SyntheticProvider provider({model});
  MitigationConfig cfg;
  cfg.ideals = IdealSet::uniform(axes);
  cfg.epsilon = 1e-9;
  cfg.max_steps = 1;
  PriorityVector p = priorities({{"gender", 0.35}, {"age", 0.25}, {"clothing", 0.4}});
  std::vector<std::string> b_star = {"gender", "age", "clothing"};

  MitigationTrace trace = intermit_run({"nurse"}, axes, b_star, p, cfg, provider);
  CHECK(trace.reason == TerminationReason::max_steps_reached);
  CHECK(trace.steps.size() == 1);
}

TEST_CASE("provider failure yields a partial trace with error status") {
  class FailingProvider : public GenerationProvider {
   public:
    explicit FailingProvider(SyntheticModel model) : model_(std::move(model)) {}
    AnnotatedImageSet generate(const GenerationRequest& req) override {
      if (++calls_ > 1) throw ProviderError("backend went away");
      return model_.generate(req);
    }
    const AxisSet& axes() const override { return model_.axes(); }

   private:
    SyntheticModel model_;
    int calls_ = 0;
  };

  SyntheticModel model = coupled_demo_model();
  FailingProvider provider(model);
  MitigationConfig cfg;
  cfg.ideals = IdealSet::uniform(model.axes());
  PriorityVector p = priorities({{"gender", 0.35}, {"age", 0.25}, {"clothing", 0.4}});
  std::vector<std::string> b_star = {"gender", "age", "clothing"};

  MitigationTrace trace = intermit_run({"nurse"}, model.axes(), b_star, p, cfg, provider);
  CHECK(trace.reason == TerminationReason::provider_error);
  REQUIRE(trace.error.has_value());
  CHECK(trace.error->find("backend went away") != std::string::npos);
}

TEST_CASE("mitigation metrics") {
  MitigationTrace a;
  a.mit_amt = 0.2;
  a.mit_steps_ratio = 2.0 / 3.0;
  MitigationTrace b;
  b.mit_amt = 0.3;
  b.mit_steps_ratio = 1.0 / 3.0;
  std::vector<MitigationTrace> traces = {a, b};
  auto metrics = mitigation_metrics(traces);
  CHECK(metrics.mit_amt == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(metrics.mit_steps == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("validate_estimates") {
  SUBCASE("anti-correlated lists") {
    std::vector<double> pre = {0.1, 0.2, 0.3};
    std::vector<double> post = {0.3, 0.2, 0.1};
    CHECK(validate_estimates(pre, post) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("estimator equals mitigation outcome on divisible exact-counts data") {
    // Every single-value conditional of this joint apportions without
    // rounding at n = 48 (estimator) and n = 24 (mitigation cells), so
    // the estimated and post-mitigation IS values agree elementwise and
    // r = 1 exactly.
    AxisSet axes({{"gender", {"male", "female"}, "", {"male {prompt}", "female {prompt}"}},
                  {"age", {"young", "old"}, "", {"young {prompt}", "old {prompt}"}},
                  {"mood", {"happy", "sad"}, "", {"happy {prompt}", "sad {prompt}"}}});
    std::vector<SyntheticModel::JointEntry> joint = {
        {{"male", "young", "happy"}, 16.0 / 48}, {{"male", "young", "sad"}, 8.0 / 48},
        {{"male", "old", "happy"}, 4.0 / 48},    {{"male", "old", "sad"}, 4.0 / 48},
        {{"female", "young", "happy"}, 4.0 / 48}, {{"female", "young", "sad"}, 4.0 / 48},
        {{"female", "old", "sad"}, 8.0 / 48},
    };
    SyntheticModel model(AxisSet(axes.axes()), std::move(joint), "prompt");
    PromptData data = collect(model, 48);
    IdealSet ideals = IdealSet::uniform(axes);
    auto matrix = build_matrix(data, axes, axes.names(), ideals);

    std::vector<double> pre, post;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const BiasAxis& source = axes.axes()[i];
      // actually mitigate the source axis with the even prompt plan
      auto plan = prompt_modification_plan({"prompt"}, axes, {{source.name}}, 48);
      AnnotatedImageSet pooled;
      pooled.prompt = "prompt";
      for (const auto& cell : plan.cells) {
        auto part = model.generate({"prompt", cell.constraints, cell.allocation});
        for (auto& annotation : part.annotations) {
          pooled.annotations.push_back(std::move(annotation));
        }
      }
      for (std::size_t j = 0; j < axes.size(); ++j) {
        const BiasAxis& target = axes.axes()[j];
        if (i == j) continue;
        auto [d_init, w_init] = initial_bias(data.init, target, ideals.for_axis(target.name));
        auto [d_mit, w_mit] = initial_bias(pooled, target, ideals.for_axis(target.name));
        pre.push_back(matrix.at(i, j));
        post.push_back(w_init - w_mit);
      }
    }
    CHECK(validate_estimates(pre, post) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("trace JSON round-trips losslessly") {
  SyntheticModel model = coupled_demo_model();
  SyntheticProvider provider({model});
  MitigationConfig cfg;
  cfg.ideals = IdealSet::uniform(model.axes());
  PriorityVector p = priorities({{"gender", 0.35}, {"age", 0.25}, {"clothing", 0.4}});
  std::vector<std::string> b_star = {"gender", "age", "clothing"};
  MitigationTrace trace = intermit_run({"nurse"}, model.axes(), b_star, p, cfg, provider);

  MitigationTrace back = parse_trace(dump_trace(trace));
  CHECK(back.steps.size() == trace.steps.size());
  CHECK(back.mitigated_axes == trace.mitigated_axes);
  CHECK(back.initial_tau == trace.initial_tau);
  CHECK(back.final_tau == trace.final_tau);
  CHECK(back.mit_amt == trace.mit_amt);
  CHECK(back.mit_steps_ratio == trace.mit_steps_ratio);
  CHECK(back.reason == trace.reason);
  CHECK(back.initial_w == trace.initial_w);
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    CHECK(back.steps[i].selected_axis == trace.steps[i].selected_axis);
    CHECK(back.steps[i].gamma_scores == trace.steps[i].gamma_scores);
    CHECK(back.steps[i].tau_before == trace.steps[i].tau_before);
    CHECK(back.steps[i].tau_after == trace.steps[i].tau_after);
    CHECK(back.steps[i].per_axis_w == trace.steps[i].per_axis_w);
    CHECK(back.steps[i].alerts.size() == trace.steps[i].alerts.size());
  }
  // dump(parse(dump)) is byte-stable
  CHECK(dump_trace(back) == dump_trace(trace));
}
