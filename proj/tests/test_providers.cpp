#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "oracles.hpp"

#include "biasengine/errors.hpp"
#include "biasengine/json_io.hpp"
#include "biasengine/occupation.hpp"
#include "biasengine/providers.hpp"
#include "biasengine/rng.hpp"

using namespace biasengine;

namespace {

AxisSet two_axes() {
  return AxisSet({{"gender", {"male", "female"}, "", {}},
                  {"mood", {"happy", "sad"}, "", {}}});
}

SyntheticModel gender_mood_model() {
  // P(male,happy)=.4, P(male,sad)=.1, P(female,happy)=.1, P(female,sad)=.4
  return SyntheticModel(two_axes(),
                        {{{"male", "happy"}, 0.4},
                         {{"male", "sad"}, 0.1},
                         {{"female", "happy"}, 0.1},
                         {{"female", "sad"}, 0.4}},
                        "person");
}

std::map<std::string, int> value_counts(const AnnotatedImageSet& set, const std::string& axis) {
  std::map<std::string, int> counts;
  for (const auto& a : set.annotations) counts[a.value_for(axis)] += 1;
  return counts;
}

}  // namespace

TEST_CASE("largest remainder apportionment") {
  SUBCASE("hand case 38.4 / 9.6") {
    std::vector<double> quotas = {38.4, 9.6};
    auto counts = largest_remainder_apportion(quotas, 48);
    CHECK(counts == std::vector<std::size_t>{38, 10});
  }
  SUBCASE("ties resolve to the lower index") {
    std::vector<double> quotas = {1.5, 1.5, 1.0};
    auto counts = largest_remainder_apportion(quotas, 4);
    CHECK(counts == std::vector<std::size_t>{2, 1, 1});
  }
  SUBCASE("integer quotas are exact") {
    std::vector<double> quotas = {12, 24, 12};
    CHECK(largest_remainder_apportion(quotas, 48) == std::vector<std::size_t>{12, 24, 12});
  }
  SUBCASE("quota sum must match n") {
    std::vector<double> quotas = {1.0, 1.0};
    CHECK_THROWS_AS(largest_remainder_apportion(quotas, 5), DataError);
  }
  SUBCASE("matches the reference implementation on random quotas") {
    std::uint64_t state = 7;
    for (int trial = 0; trial < 200; ++trial) {
      std::size_t k = 2 + static_cast<std::size_t>(next_unit(state) * 6.0);
      long long n = 1 + static_cast<long long>(next_unit(state) * 100.0);
      std::vector<double> probs(k);
      double total = 0.0;
      for (double& p : probs) {
        p = next_unit(state);
        total += p;
      }
      std::vector<double> quotas(k);
      for (std::size_t i = 0; i < k; ++i) {
        quotas[i] = probs[i] / total * static_cast<double>(n);
      }
      auto ours = largest_remainder_apportion(quotas, static_cast<std::size_t>(n));
      auto ref = oracles::apportion_ref(quotas, n);
      REQUIRE(ours.size() == ref.size());
      for (std::size_t i = 0; i < ours.size(); ++i) {
        CHECK(static_cast<long long>(ours[i]) == ref[i]);
      }
    }
  }
}

TEST_CASE("template_counterfactuals") {
  AxisSet axes = occupation_axes();
  PromptSpec chef{"chef"};
  auto cfs = template_counterfactuals(chef, axes);
  // one prompt per (axis, value) over the occupation configuration
  CHECK(cfs.size() == 26);
  CHECK(cfs[0].axis == "gender");
  CHECK(cfs[0].value == "male");
  CHECK(cfs[0].text == "A photo of a male chef");
  CHECK(cfs[1].text == "A photo of a female chef");

  SUBCASE("single-value axis yields a single counterfactual") {
    AxisSet inert({{"style", {"photo"}, "", {"a {prompt} photo"}}});
    auto single = template_counterfactuals(chef, inert);
    REQUIRE(single.size() == 1);
    CHECK(single[0].text == "a chef photo");
  }
  SUBCASE("missing templates are an error") {
    AxisSet no_templates({{"gender", {"male", "female"}, "", {}}});
    CHECK_THROWS_AS(template_counterfactuals(chef, no_templates), ConfigError);
  }
}

TEST_CASE("synthetic model validation") {
  CHECK_THROWS_AS(SyntheticModel(two_axes(), {{{"male"}, 1.0}}, "p"), ConfigError);
  CHECK_THROWS_AS(SyntheticModel(two_axes(), {{{"male", "angry"}, 1.0}}, "p"), ConfigError);
  CHECK_THROWS_AS(SyntheticModel(two_axes(), {{{"male", "happy"}, 0.9}}, "p"), ConfigError);
}

TEST_CASE("synthetic exact-counts generation") {
  SyntheticModel model = gender_mood_model();

  SUBCASE("unconditioned 2x2 uniform joint splits evenly") {
    SyntheticModel uniform = independent_model(two_axes(), "person");
    GenerationRequest req{"person", {}, 48};
    auto set = uniform.generate(req);
    CHECK(set.size() == 48);
    auto genders = value_counts(set, "gender");
    CHECK(genders["male"] == 24);
    CHECK(genders["female"] == 24);
  }
  SUBCASE("hand apportionment: condition gender=male") {
    GenerationRequest req{"person", {{"gender", "male"}}, 48};
    auto set = model.generate(req);
    auto moods = value_counts(set, "mood");
    CHECK(moods["happy"] == 38);  // 48 * 0.8 = 38.4 -> 38
    CHECK(moods["sad"] == 10);    // 48 * 0.2 =  9.6 -> 10
    REQUIRE(set.intervention.has_value());
    CHECK(set.intervention->axis == "gender");
  }
  SUBCASE("degenerate conditional forces the value") {
    SyntheticModel deterministic(two_axes(),
                                 {{{"male", "happy"}, 0.5}, {{"female", "sad"}, 0.5}}, "p");
    GenerationRequest req{"p", {{"gender", "male"}}, 10};
    auto set = deterministic.generate(req);
    auto moods = value_counts(set, "mood");
    CHECK(moods["happy"] == 10);
  }
  SUBCASE("zero-mass conditioning is an error") {
    SyntheticModel deterministic(two_axes(),
                                 {{{"male", "happy"}, 0.5}, {{"female", "sad"}, 0.5}}, "p");
    GenerationRequest req{"p", {{"gender", "male"}, {"mood", "sad"}}, 10};
    CHECK_THROWS_AS(deterministic.generate(req), DataError);
  }
  SUBCASE("later constraints on the same axis win") {
    GenerationRequest req{"person", {{"gender", "male"}, {"gender", "female"}}, 12};
    auto set = gender_mood_model().generate(req);
    auto genders = value_counts(set, "gender");
    CHECK(genders["female"] == 12);
  }
  SUBCASE("conditioning is exact Bayes restriction") {
    oracles::TestJoint joint = oracles::TestJoint::from_model(model);
    auto cond = model.conditioned({{Intervention{"gender", "male"}}});
    double mass = joint.value_mass("gender", "male");
    for (const auto& entry : cond) {
      double original = 0.0;
      for (const auto& [tuple, p] : joint.entries) {
        if (tuple == entry.values) original = p;
      }
      CHECK(entry.p == doctest::Approx(original / mass).epsilon(1e-12));
    }
  }
  SUBCASE("marginals recover the conditional joint within one count per cell") {
    GenerationRequest req{"person", {}, 47};  // deliberately indivisible
    auto set = model.generate(req);
    auto genders = value_counts(set, "gender");
    CHECK(std::abs(genders["male"] - 47 * 0.5) <= 1.0);
    auto moods = value_counts(set, "mood");
    CHECK(std::abs(moods["happy"] - 47 * 0.5) <= 1.0);
  }
}

TEST_CASE("synthetic sampled generation is seed-reproducible") {
  SyntheticModel model = gender_mood_model();
  GenerationRequest req{"person", {}, 100, GenerationMode::sampled, 42};
  auto a = model.generate(req);
  auto b = model.generate(req);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.annotations[i].attrs == b.annotations[i].attrs);
  }
  GenerationRequest other{"person", {}, 100, GenerationMode::sampled, 43};
  auto c = model.generate(other);
  bool any_different = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.annotations[i].attrs != c.annotations[i].attrs) any_different = true;
  }
  CHECK(any_different);
}

TEST_CASE("synthetic provider dispatches by prompt") {
  SyntheticProvider provider({gender_mood_model()});
  GenerationRequest req{"person", {}, 8};
  CHECK(provider.generate(req).size() == 8);
  GenerationRequest unknown{"spaceship", {}, 8};
  CHECK_THROWS_AS(provider.generate(unknown), ProviderError);
}

TEST_CASE("recorded corpus loading") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "biasengine_corpus_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  AxisSet axes({{"gender", {"male", "female"}, "", {}}});

  SUBCASE("valid 48-image file") {
    AnnotatedImageSet set;
    set.prompt = "chef";
    for (int i = 0; i < 48; ++i) {
      ImageAnnotation a;
      a.attrs["gender"] = i % 2 ? "male" : "female";
      set.annotations.push_back(a);
    }
    std::ofstream(dir / "chef_init.json") << dump_annotated_image_set(set);
    auto corpus = load_recorded_corpus((dir / "chef_init.json").string(), axes);
    REQUIRE(corpus.sets.size() == 1);
    CHECK(corpus.sets[0].size() == 48);
    CHECK(corpus.warnings.empty());
  }
  SUBCASE("unlisted value maps to unknown with a warning") {
    std::ofstream(dir / "odd.json")
        << R"({"prompt": "chef", "intervention": null,
               "images": [{"attrs": {"gender": "nonbinary"}}]})";
    auto corpus = load_recorded_corpus(dir.string(), axes);
    REQUIRE(corpus.sets.size() == 1);
    CHECK(corpus.sets[0].annotations[0].value_for("gender") == "unknown");
    REQUIRE(corpus.warnings.size() == 1);
    CHECK(corpus.warnings[0].find("nonbinary") != std::string::npos);
  }
  SUBCASE("missing images key names the key and the file") {
    std::ofstream(dir / "broken.json") << R"({"prompt": "chef"})";
    try {
      load_recorded_corpus(dir.string(), axes);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      std::string message = e.what();
      CHECK(message.find("images") != std::string::npos);
      CHECK(message.find("broken.json") != std::string::npos);
    }
  }
  SUBCASE("nonexistent path is a config error") {
    CHECK_THROWS_AS(load_recorded_corpus((dir / "nope").string(), axes), ConfigError);
  }
  fs::remove_all(dir);
}

namespace {

std::string canned_response_json() {
  AnnotatedImageSet set;
  set.prompt = "person";
  for (int i = 0; i < 4; ++i) {
    ImageAnnotation a;
    a.attrs["gender"] = i % 2 ? "male" : "female";
    set.annotations.push_back(a);
  }
  std::string text = dump_annotated_image_set(set);
  // single line for shell-quoting convenience
  std::string flat;
  for (char c : text) {
    if (c != '\n') flat.push_back(c);
  }
  return flat;
}

}  // namespace

TEST_CASE("subprocess adapter") {
  AxisSet axes({{"gender", {"male", "female"}, "", {}}});
  GenerationRequest req{"person", {}, 4};

  SUBCASE("canned valid response") {
    std::string cmd = "cat > /dev/null; printf '%s' '" + canned_response_json() + "'";
    AdapterSpec spec = parse_adapter_spec(cmd, std::chrono::milliseconds(5000));
    CHECK(spec.kind == AdapterSpec::Kind::subprocess);
    auto set = external_adapter(req, spec, axes);
    CHECK(set.size() == 4);
  }
  SUBCASE("request arrives on stdin as one JSON line") {
    std::string cmd =
        "read line; prompt=$(printf '%s' \"$line\" | grep -o '\"prompt\":\"person\"'); "
        "if [ -n \"$prompt\" ]; then printf '%s' '" +
        canned_response_json() + "'; else exit 9; fi";
    AdapterSpec spec = parse_adapter_spec(cmd, std::chrono::milliseconds(5000));
    CHECK(external_adapter(req, spec, axes).size() == 4);
  }
  SUBCASE("malformed JSON is a schema error") {
    AdapterSpec spec = parse_adapter_spec("cat > /dev/null; echo 'not json'",
                                          std::chrono::milliseconds(5000));
    CHECK_THROWS_AS(external_adapter(req, spec, axes), AdapterSchemaError);
  }
  SUBCASE("nonzero exit is an exec error") {
    AdapterSpec spec =
        parse_adapter_spec("cat > /dev/null; exit 3", std::chrono::milliseconds(5000));
    CHECK_THROWS_AS(external_adapter(req, spec, axes), AdapterExecError);
  }
  SUBCASE("timeout kills the adapter") {
    AdapterSpec spec = parse_adapter_spec("sleep 30", std::chrono::milliseconds(200));
    CHECK_THROWS_AS(external_adapter(req, spec, axes), AdapterTimeoutError);
  }
  SUBCASE("environment variable overrides the timeout") {
    setenv("BIASENGINE_ADAPTER_TIMEOUT_MS", "200", 1);
    AdapterSpec spec = parse_adapter_spec("sleep 30", std::chrono::milliseconds(60000));
    CHECK_THROWS_AS(external_adapter(req, spec, axes), AdapterTimeoutError);
    unsetenv("BIASENGINE_ADAPTER_TIMEOUT_MS");
  }
  SUBCASE("generation request wire format round-trips") {
    GenerationRequest wire{"chef", {{"gender", "male"}}, 48, GenerationMode::sampled, 7};
    GenerationRequest back = parse_generation_request(dump_generation_request(wire));
    CHECK(back.prompt == "chef");
    REQUIRE(back.intervention.size() == 1);
    CHECK(back.intervention[0].value == "male");
    CHECK(back.n == 48);
    CHECK(back.mode == GenerationMode::sampled);
    CHECK(back.seed == 7);
  }
}

TEST_CASE("http adapter") {
  AxisSet axes({{"gender", {"male", "female"}, "", {}}});
  GenerationRequest req{"person", {}, 4};

  httplib::Server server;
  server.Post("/generate", [&](const httplib::Request& request, httplib::Response& response) {
    GenerationRequest parsed = parse_generation_request(request.body);
    SyntheticModel model(AxisSet(axes.axes()),
                         {{{"male"}, 0.5}, {{"female"}, 0.5}}, "person");
    response.set_content(dump_annotated_image_set(model.generate(parsed)), "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& response) {
    response.set_content("{}", "application/json");
  });
  server.Post("/fail", [](const httplib::Request&, httplib::Response& response) {
    response.status = 500;
  });

  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  std::string base = "http://127.0.0.1:" + std::to_string(port);
  SUBCASE("valid endpoint") {
    auto set = external_adapter(req, parse_adapter_spec(base + "/generate"), axes);
    CHECK(set.size() == 4);
  }
  SUBCASE("schema violation") {
    CHECK_THROWS_AS(external_adapter(req, parse_adapter_spec(base + "/broken"), axes),
                    AdapterSchemaError);
  }
  SUBCASE("non-2xx status") {
    CHECK_THROWS_AS(external_adapter(req, parse_adapter_spec(base + "/fail"), axes),
                    AdapterExecError);
  }

  server.stop();
  server_thread.join();
}

TEST_CASE("adapter provider collects warnings") {
  AxisSet axes({{"gender", {"male", "female"}, "", {}}});
  std::string odd =
      R"({"prompt": "person", "intervention": null, "images": [{"attrs": {"gender": "robot"}}]})";
  AdapterSpec spec = parse_adapter_spec("cat > /dev/null; printf '%s' '" + odd + "'",
                                        std::chrono::milliseconds(5000));
  AdapterProvider provider(spec, AxisSet(axes.axes()));
  GenerationRequest req{"person", {}, 1};
  auto set = provider.generate(req);
  CHECK(set.annotations[0].value_for("gender") == "unknown");
  auto warnings = provider.take_warnings();
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("robot") != std::string::npos);
  CHECK(provider.take_warnings().empty());
}

TEST_CASE("synthetic model JSON round-trip") {
  SyntheticModel model = gender_mood_model();
  SyntheticModel back = parse_synthetic_model(dump_synthetic_model(model));
  CHECK(back.prompt_key() == "person");
  REQUIRE(back.joint().size() == 4);
  CHECK(back.joint()[0].values == std::vector<std::string>{"male", "happy"});
  CHECK(back.joint()[0].p == doctest::Approx(0.4));
}
