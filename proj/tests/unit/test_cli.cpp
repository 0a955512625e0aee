#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ncps/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

// One scratch directory for the whole binary; later cases reuse earlier outputs.
const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("ncps_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (scratch() / name).string(); }

Result run(const std::string& args) {
  const std::string out = at("stdout.txt"), err = at("stderr.txt");
  const std::string cmd = std::string("\"") + NCPS_CLI_PATH + "\" " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = ncps::read_file(out);
  r.err = ncps::read_file(err);
  return r;
}

const std::string& tiny_config() {
  static const std::string path = [] {
    const std::string p = at("tiny.json");
    std::ofstream(p) << json{{"camera", {{"width", 40}, {"height", 30}}},
                             {"optimizer", {{"iterations", 12}}},
                             {"ccm", {{"iterations", 50}}}}
                            .dump();
    return p;
  }();
  return path;
}

// Synthesized dataset shared by the cases below.
const std::string& dataset() {
  static const std::string path = [] {
    const std::string d = at("ds");
    const Result r = run("synth -c " + tiny_config() + " -p sphere_cap_colored -o " + d);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return d;
  }();
  return path;
}

json read_json(const std::string& path) { return json::parse(ncps::read_file(path)); }

}  // namespace

TEST_CASE("synth writes a complete dataset directory") {
  const fs::path d = dataset();
  for (const char* f : {"image.pfm", "image.png", "normals_gt.pfm", "normals_gt.png", "depth_gt.pfm", "scene.json",
                        "image_crosstalk.pfm", "baseline_red.pfm", "ideal_blue.pfm", "config.resolved.json",
                        "run.log", "manifest.json"})
    CHECK_MESSAGE(fs::exists(d / f), f);
  const json scene = read_json((d / "scene.json").string());
  CHECK(scene["layout"] == "ncps-dataset/1");
  CHECK(scene["preset"] == "sphere_cap_colored");
  CHECK(scene["rig"]["lights"].size() == 3);
  CHECK(read_json((d / "manifest.json").string())["layout"] == "ncps-dataset/1");
  CHECK(ncps::load_pfm((d / "image.pfm").string()).width == 40);
}

TEST_CASE("eval of ground truth against itself is zero") {
  const Result r = run("eval -i " + dataset() + "/normals_gt.pfm -d " + dataset() + " -o " + at("eval_gt"));
  CHECK(r.code == 0);
  CHECK(r.out == "mae_deg,0\n");
}

TEST_CASE("reconstruct then eval, reproducible from the resolved config") {
  const Result r = run("reconstruct -c " + tiny_config() + " -i " + dataset() + " -o " + at("rec"));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const fs::path rec = at("rec");
  for (const char* f : {"normals.png", "normals.pfm", "depth.pfm", "mesh.obj", "model.ckpt", "loss_history.csv",
                        "metrics.csv", "brdf_slice.csv", "config.resolved.json", "run.log", "manifest.json"})
    CHECK_MESSAGE(fs::exists(rec / f), f);
  const json manifest = read_json((rec / "manifest.json").string());
  CHECK(manifest["layout"] == "ncps-run/1");
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["command"] == "reconstruct");
  CHECK(ncps::read_loss_history((rec / "loss_history.csv").string()).size() == 12);

  double mae = -1;
  for (const ncps::Metric& m : ncps::read_metrics((rec / "metrics.csv").string()))
    if (m.metric == "mae" && m.name == "normals_deg") mae = m.value;
  REQUIRE(mae >= 0);
  const Result e = run("eval -i " + rec.string() + " -d " + dataset() + " -o " + at("eval_rec"));
  REQUIRE(e.code == 0);
  REQUIRE(e.out.rfind("mae_deg,", 0) == 0);
  CHECK(std::stod(e.out.substr(8)) == doctest::Approx(mae).epsilon(1e-5));

  const Result again = run("reconstruct -c " + (rec / "config.resolved.json").string() + " -o " + at("rec2"));
  REQUIRE_MESSAGE(again.code == 0, again.err);
  CHECK(ncps::read_file((rec / "metrics.csv").string()) == ncps::read_file(at("rec2") + "/metrics.csv"));
}

TEST_CASE("crosstalk correction workflow") {
  const Result t = run("ccm-train -c " + tiny_config() + " -i " + dataset() + " -o " + at("ccm"));
  REQUIRE_MESSAGE(t.code == 0, t.err);
  CHECK(fs::exists(at("ccm") + "/model.ckpt"));
  CHECK(fs::exists(at("ccm") + "/ccm_loss.csv"));
  const ncps::Checkpoint ck = ncps::load_checkpoint(at("ccm") + "/model.ckpt");
  CHECK(ck.ccm.has_value());
  CHECK(!ck.model.has_value());
  const Result a = run("ccm-apply -i " + dataset() + "/image_crosstalk.pfm -k " + at("ccm") + "/model.ckpt -o " +
                       at("ccm_apply"));
  REQUIRE_MESSAGE(a.code == 0, a.err);
  const ncps::Image out = ncps::load_pfm(at("ccm_apply") + "/corrected.pfm");
  CHECK(out.width == 40);
  CHECK(out.height == 30);
}

TEST_CASE("ablate writes one subdirectory per variant") {
  const Result r = run("ablate -c " + tiny_config() + " -i " + dataset() + " -o " + at("abl") + " -m shared_channels");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(at("abl") + "/full/normals.pfm"));
  CHECK(fs::exists(at("abl") + "/shared_channels/normals.pfm"));
  CHECK(!fs::exists(at("abl") + "/no_brdf"));
  bool margin = false;
  for (const ncps::Metric& m : ncps::read_metrics(at("abl") + "/metrics.csv"))
    margin = margin || (m.metric == "shared_channels" && m.name == "mae_margin_deg");
  CHECK(margin);
  CHECK(run("ablate -i " + dataset() + " -m everything").code == 2);
}

TEST_CASE("invalid configuration exits 2 with a JSON error") {
  const std::string bad = at("bad.json");
  std::ofstream(bad) << R"({"optimizer": {"iterations": 0}})";
  const Result r = run("reconstruct -c " + bad + " -i " + dataset() + " -o " + at("never"));
  CHECK(r.code == 2);
  const json err = json::parse(r.err);
  CHECK(err["error"]["category"] == "config");
  CHECK(!err["error"]["message"].get<std::string>().empty());
  CHECK(!fs::exists(at("never")));
  std::ofstream(bad) << R"({"optimiser": {}})";
  CHECK(run("synth -c " + bad + " -o " + at("never")).code == 2);
  CHECK(run("").code == 2);
  CHECK(run("reconstruct --bogus").code == 2);
}

TEST_CASE("missing or malformed input exits 3") {
  const Result r = run("reconstruct -c " + tiny_config() + " -i " + at("nothing.pfm") + " -o " + at("r3"));
  CHECK(r.code == 3);
  CHECK(json::parse(r.err)["error"]["category"] == "data");
  ncps::write_file(at("junk.pfm"), "PF\n4 4\n-1.0\nxx");
  CHECK(run("eval -i " + at("junk.pfm") + " -d " + dataset() + " -o " + at("e3")).code == 3);
}

TEST_CASE("environment overrides are applied below flags") {
  const std::string cmd = "NCPS_OUTPUT=" + at("env_out") + " ";
  const std::string full = cmd + "\"" + NCPS_CLI_PATH + "\" eval -i " + dataset() + "/normals_gt.pfm -d " + dataset() +
                           " >/dev/null 2>&1";
  CHECK(std::system(full.c_str()) == 0);
  CHECK(fs::exists(at("env_out") + "/metrics.csv"));
  const std::string bad = "NCPS_THREADS=many \"" + std::string(NCPS_CLI_PATH) + "\" eval -i x -d y >/dev/null 2>&1";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == 2);
}
