#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  std::string command = std::string(BIASAUDIT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult result;
  std::array<char, 4096> buffer;
  std::size_t n;
  while ((n = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) {
    result.output.append(buffer.data(), n);
  }
  int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::path(TEST_TMP_ROOT) / "cli_runs" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) {
      files[fs::relative(entry.path(), root).string()] = read_file(entry.path());
    }
  }
  return files;
}

std::string write_config(const std::string& name, const std::string& body) {
  fs::path path = fs::path(TEST_TMP_ROOT) / "cli_runs" / name;
  fs::create_directories(path.parent_path());
  std::ofstream(path) << body;
  return path.string();
}

}  // namespace

TEST_CASE("evaluate on the bundled coupled demo") {
  fs::path out = fresh_dir("evaluate_demo");
  std::string config = write_config("evaluate_demo.json", R"({
    "provider": {"kind": "bundled", "scenario": "coupled_demo"}
  })");
  auto result =
      run_cli("evaluate --config " + config + " --out " + out.string() + " --seed 3");
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(out / "evaluate.json"));
  CHECK(fs::exists(out / "evaluate.csv"));
  std::string json = read_file(out / "evaluate.json");
  CHECK(json.find("\"meta\"") != std::string::npos);
  CHECK(json.find("\"seed\": 3") != std::string::npos);
  CHECK(json.find("mad_normalized") != std::string::npos);
  std::string csv = read_file(out / "evaluate.csv");
  CHECK(csv.rfind("# biasaudit", 0) == 0);
}

TEST_CASE("connect writes matrix artifacts with entanglement") {
  fs::path out = fresh_dir("connect_demo");
  std::string config = write_config("connect_demo.json", R"({
    "provider": {"kind": "bundled", "scenario": "coupled_demo"}
  })");
  auto result = run_cli("connect --config " + config + " --out " + out.string());
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(out / "matrix_nurse.json"));
  CHECK(fs::exists(out / "matrix_nurse.txt"));
  std::string json = read_file(out / "matrix_nurse.json");
  CHECK(json.find("aggregate_entanglement") != std::string::npos);
}

TEST_CASE("graph on a coupled model finds edges; zero threshold prunes them") {
  fs::path out = fresh_dir("graph_demo");
  std::string config = write_config("graph_demo.json", R"({
    "provider": {"kind": "bundled", "scenario": "coupled_demo"}
  })");
  auto result = run_cli("graph --config " + config + " --out " + out.string());
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(out / "graph_nurse.dot"));
  CHECK(fs::exists(out / "graph_nurse.json"));
  CHECK(fs::exists(out / "graph_nurse.csv"));
  CHECK(fs::exists(out / "graph_nurse_node_stats.csv"));
  std::string dot = read_file(out / "graph_nurse.dot");
  CHECK(dot.find("gender") != std::string::npos);
  CHECK(dot.find("->") != std::string::npos);  // the gender->age coupling

  fs::path out2 = fresh_dir("graph_demo_pruned");
  auto pruned =
      run_cli("graph --config " + config + " --out " + out2.string() + " --p-threshold 0");
  CHECK(pruned.exit_code == 0);
  CHECK(read_file(out2 / "graph_nurse.dot").find("->") == std::string::npos);
}

TEST_CASE("mitigate exits 0 on success and 5 when the threshold is unreachable") {
  std::string config = write_config("mitigate_demo.json", R"({
    "provider": {"kind": "bundled", "scenario": "coupled_demo"},
    "priority": {"gender": 0.35, "age": 0.25, "clothing": 0.4}
  })");
  fs::path out = fresh_dir("mitigate_ok");
  auto result = run_cli("mitigate --config " + config + " --out " + out.string());
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(out / "trace_nurse.json"));
  CHECK(fs::exists(out / "trace_nurse_steps.csv"));
  CHECK(fs::exists(out / "mitigation_summary.json"));
  CHECK(result.output.find("threshold_met") != std::string::npos);

  // With a budget of 50 the 8 product cells cannot split evenly, so the
  // residual quantization keeps tau above a tiny epsilon forever.
  std::string noisy_config = write_config("mitigate_unreachable.json", R"({
    "provider": {"kind": "bundled", "scenario": "coupled_demo"},
    "priority": {"gender": 0.35, "age": 0.25, "clothing": 0.4},
    "budget_n": 50
  })");
  fs::path out2 = fresh_dir("mitigate_unreachable");
  auto unreachable = run_cli("mitigate --config " + noisy_config + " --out " + out2.string() +
                             " --epsilon 0.0001");
  CHECK(unreachable.exit_code == 5);
  CHECK(fs::exists(out2 / "trace_nurse.json"));  // partial trace still written
}

TEST_CASE("worsen alerts are surfaced on the adversarial scenario") {
  std::string config = write_config("mitigate_adversarial.json", R"({
    "provider": {"kind": "bundled", "scenario": "adversarial_demo"},
    "priority": {"gender": 1.0}
  })");
  fs::path out = fresh_dir("mitigate_adversarial");
  auto result = run_cli("mitigate --config " + config + " --out " + out.string());
  CHECK(result.exit_code == 0);
  CHECK(result.output.find("ALERT") != std::string::npos);
  CHECK(result.output.find("age") != std::string::npos);
}

TEST_CASE("config errors exit 2 before any artifact is written") {
  fs::path out = fresh_dir("config_error");
  SUBCASE("missing config file") {
    auto result = run_cli("evaluate --config /nonexistent.json --out " + out.string());
    CHECK(result.exit_code == 2);
    CHECK_FALSE(fs::exists(out));
  }
  SUBCASE("invalid provider kind") {
    std::string config =
        write_config("bad_provider.json", R"({"provider": {"kind": "quantum"}})");
    auto result = run_cli("evaluate --config " + config + " --out " + out.string());
    CHECK(result.exit_code == 2);
    CHECK_FALSE(fs::exists(out));
  }
  SUBCASE("priority that does not sum to 1") {
    std::string config = write_config("bad_priority.json", R"({
      "provider": {"kind": "bundled", "scenario": "coupled_demo"},
      "priority": {"gender": 0.9, "age": 0.9}
    })");
    auto result = run_cli("mitigate --config " + config + " --out " + out.string());
    CHECK(result.exit_code == 2);
    CHECK_FALSE(fs::exists(out));
  }
}

TEST_CASE("recorded corpus data errors exit 3") {
  fs::path dir = fresh_dir("recorded_corpus");
  fs::create_directories(dir);
  std::ofstream(dir / "broken.json") << "{\"prompt\": \"x\"}";
  std::string axes_file = write_config("axes.json", R"({
    "axes": [{"name": "gender", "values": ["male", "female"],
              "question": "q", "cf_prompt_templates": ["m {prompt}", "f {prompt}"]}]
  })");
  std::string config = write_config("recorded.json", R"({
    "provider": {"kind": "recorded", "path": ")" + dir.string() + R"("},
    "axes_file": ")" + axes_file + R"("
  })");
  fs::path out = fresh_dir("recorded_out");
  auto result = run_cli("evaluate --config " + config + " --out " + out.string());
  CHECK(result.exit_code == 3);
  CHECK(result.output.find("images") != std::string::npos);
}

TEST_CASE("non-empty output directory requires --force") {
  std::string config = write_config("force.json", R"({
    "provider": {"kind": "bundled", "scenario": "coupled_demo"}
  })");
  fs::path out = fresh_dir("force_out");
  fs::create_directories(out);
  std::ofstream(out / "existing.txt") << "old";
  auto refused = run_cli("evaluate --config " + config + " --out " + out.string());
  CHECK(refused.exit_code == 2);
  CHECK(refused.output.find("--force") != std::string::npos);
  auto forced = run_cli("evaluate --config " + config + " --out " + out.string() + " --force");
  CHECK(forced.exit_code == 0);
}

TEST_CASE("golden determinism: same seed, byte-identical artifacts") {
  std::string config = write_config("golden.json", R"({
    "provider": {"kind": "bundled", "scenario": "coupled_demo"}
  })");
  fs::path out1 = fresh_dir("golden_1");
  fs::path out2 = fresh_dir("golden_2");
  CHECK(run_cli("evaluate --config " + config + " --out " + out1.string() + " --seed 11")
            .exit_code == 0);
  CHECK(run_cli("evaluate --config " + config + " --out " + out2.string() + " --seed 11")
            .exit_code == 0);
  CHECK(snapshot_tree(out1) == snapshot_tree(out2));
}

TEST_CASE("--jobs does not change the artifacts") {
  std::string config = write_config("jobs.json", R"({
    "provider": {"kind": "bundled", "scenario": "occupation"},
    "prompts": ["chef", "nurse", "doctor", "farmer"]
  })");
  fs::path out1 = fresh_dir("jobs_1");
  fs::path out4 = fresh_dir("jobs_4");
  CHECK(run_cli("evaluate --config " + config + " --out " + out1.string() +
                " --seed 5 --jobs 1")
            .exit_code == 0);
  CHECK(run_cli("evaluate --config " + config + " --out " + out4.string() +
                " --seed 5 --jobs 4")
            .exit_code == 0);
  CHECK(read_file(out1 / "evaluate.json") == read_file(out4 / "evaluate.json"));
  CHECK(read_file(out1 / "evaluate.csv") == read_file(out4 / "evaluate.csv"));
}

TEST_CASE("recorded corpus end to end") {
  // one prompt with an init set and both gender counterfactual sets
  fs::path dir = fresh_dir("recorded_ok");
  fs::create_directories(dir);
  auto image = [](const std::string& value) {
    return std::string(R"({"attrs": {"gender": ")") + value + R"("}})";
  };
  auto set_json = [&image](const std::string& intervention, int male, int female) {
    std::string images;
    auto append = [&images](const std::string& entry) {
      if (!images.empty()) images += ", ";
      images += entry;
    };
    for (int i = 0; i < male; ++i) append(image("male"));
    for (int i = 0; i < female; ++i) append(image("female"));
    return std::string(R"({"prompt": "chef", "intervention": )") + intervention +
           R"(, "images": [)" + images + "]}";
  };
  std::ofstream(dir / "init.json") << set_json("null", 9, 3);
  std::ofstream(dir / "cf_male.json")
      << set_json(R"({"axis": "gender", "value": "male"})", 12, 0);
  std::ofstream(dir / "cf_female.json")
      << set_json(R"({"axis": "gender", "value": "female"})", 0, 12);
  std::string axes_file = write_config("recorded_ok_axes.json", R"({
    "axes": [{"name": "gender", "values": ["male", "female"],
              "question": "q", "cf_prompt_templates": ["m {prompt}", "f {prompt}"]}]
  })");
  std::string config = write_config("recorded_ok.json", R"({
    "provider": {"kind": "recorded", "path": ")" + dir.string() + R"("},
    "axes_file": ")" + axes_file + R"("
  })");

  fs::path out = fresh_dir("recorded_ok_out");
  auto evaluate = run_cli("evaluate --config " + config + " --out " + out.string());
  CHECK(evaluate.exit_code == 0);
  CHECK(fs::exists(out / "evaluate.json"));

  fs::path out2 = fresh_dir("recorded_ok_connect");
  auto connect = run_cli("connect --config " + config + " --out " + out2.string());
  CHECK(connect.exit_code == 0);
  CHECK(fs::exists(out2 / "matrix_chef.json"));
}

TEST_CASE("sensitivity command writes report artifacts") {
  std::string config = write_config("sensitivity.json", R"({
    "provider": {"kind": "bundled", "scenario": "coupled_demo"},
    "levels": [0.0, 0.1],
    "repeats": 2
  })");
  fs::path out = fresh_dir("sensitivity_out");
  auto result = run_cli("sensitivity --config " + config + " --out " + out.string());
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(out / "sensitivity.json"));
  std::string csv = read_file(out / "sensitivity.csv");
  CHECK(csv.find("level,metric,mean_delta,stddev") != std::string::npos);
  CHECK(csv.find("0,cas,0,0") != std::string::npos);  // zero level, zero drift
}

TEST_CASE("adapter provider runs through the CLI") {
  std::string axes_file = write_config("adapter_axes.json", R"({
    "axes": [{"name": "gender", "values": ["male", "female"],
              "question": "q", "cf_prompt_templates": ["m {prompt}", "f {prompt}"]}]
  })");
  // tiny adapter script: always answers with two male and two female images
  std::string response =
      R"({"prompt": "person", "intervention": null, "images": [)"
      R"({"attrs": {"gender": "male"}}, {"attrs": {"gender": "male"}},)"
      R"({"attrs": {"gender": "female"}}, {"attrs": {"gender": "female"}}]})";
  fs::path script = fs::path(TEST_TMP_ROOT) / "cli_runs" / "adapter.sh";
  std::ofstream(script) << "#!/bin/sh\ncat > /dev/null\nprintf '%s' '" << response << "'\n";
  std::string config = write_config("adapter.json", std::string(R"({
    "provider": {"kind": "adapter", "target": "sh )") + script.string() + R"("},
    "axes_file": ")" + axes_file + R"(",
    "prompt": "person",
    "n": 4
  })");
  fs::path out = fresh_dir("adapter_out");
  auto result = run_cli("evaluate --config " + config + " --out " + out.string());
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(out / "evaluate.json"));
}
