// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "avs3d/scene_io.hpp"
#include "cli.hpp"
#include "support.hpp"

using namespace avs;

namespace {

struct Run {
  int code;
  std::string out, err;
  nlohmann::json json() const { return nlohmann::json::parse(out); }
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kSpec = R"({
  "name": "cli", "seed": 11, "noise_sigma": 0,
  "classes": [
    {"label": "car", "shape": "box", "center": [8, 2, 0.8], "extent": [4, 2, 1.6], "point_count": 150},
    {"label": "road", "shape": "plane", "center": [0, 0, 0], "extent": [30, 8, 0], "point_count": 150},
    {"label": "tree", "shape": "cylinder", "center": [-6, 7, 3], "extent": [1, 1, 6], "point_count": 150}],
  "cameras": [{"intrinsics": [200, 0, 160, 0, 200, 120, 0, 0, 1],
               "extrinsics": [0, -1, 0, 0, 0, 0, -1, 1.5, 1, 0, 0, 0, 0, 0, 0, 1],
               "width": 320, "height": 240}],
  "captions": [{"text": "A car on the road beside a tree.", "index": 0}]
})";

struct Workspace {
  test::TempDir dir;
  std::string scene;
  Workspace() {
    test::spit(dir / "spec.json", kSpec);
    scene = (dir / "scene").string();
    REQUIRE(run({"gen-scene", "--spec", (dir / "spec.json").string(), "--out", scene}).code == 0);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1") {
  auto r = run({"frobnicate"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("usage error:", 0) == 0);
  CHECK(r.err.find("Subcommands:") != std::string::npos);
  CHECK(run({}).code == 1);
  CHECK(run({"segment", "--bogus"}).code == 1);
  CHECK(run({"segment"}).code == 1);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("data errors exit 2 with distinct prefixes") {
  Workspace ws;
  auto r = run({"segment", "--scene", ws.path("nope"), "--vocab-from-gt"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("missing file:", 0) == 0);

  test::spit(ws.path("bad.jsonl"), "not json\n");
  r = run({"tags", "--captions", ws.path("bad.jsonl")});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("schema error:", 0) == 0);

  test::spit(ws.path("trunc.avsp"), "AVSP\x05");
  auto manifest = nlohmann::json::parse(test::slurp(ws.scene + "/scene.json"));
  manifest["points"] = "../trunc.avsp";
  test::spit(ws.scene + "/scene.json", manifest.dump());
  r = run({"segment", "--scene", ws.scene, "--vocab-from-gt"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("format error:", 0) == 0);
}

TEST_CASE("mutually required flags are checked before running") {
  Workspace ws;
  auto r = run({"segment", "--scene", ws.scene});
  CHECK(r.code == 1);
  r = run({"segment", "--scene", ws.scene, "--use-point-captioner"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--checkpoint") != std::string::npos);
  CHECK(run({"tpss", "--scene", ws.scene}).code == 1);
  CHECK(run({"map", "--scene", ws.scene}).code == 1);
}

TEST_CASE("generate, segment and evaluate a noiseless scene") {
  Workspace ws;
  const auto seg = ws.path("seg.csv");
  auto r = run({"segment", "--scene", ws.scene, "--vocab-from-gt", "--use-image=false",
                "--out", seg});
  REQUIRE(r.code == 0);
  CHECK(r.json()["points"] == 450);
  r = run({"eval", "--scene", ws.scene, "--segmentation", seg});
  REQUIRE(r.code == 0);
  CHECK(r.json()["miou"].get<double>() == 1.0);
  CHECK(r.json()["tpss"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));

  test::spit(ws.path("labels.txt"), "car\nroad\n\ntree\n");
  r = run({"tpss", "--scene", ws.scene, "--labels", ws.path("labels.txt")});
  REQUIRE(r.code == 0);
  CHECK(r.json()["tpss"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("caption-driven vocabulary and mapping") {
  Workspace ws;
  auto r = run({"tags", "--captions", ws.scene + "/captions.jsonl"});
  REQUIRE(r.code == 0);
  CHECK(r.json()["tags"] == nlohmann::json::array({"car", "road", "tree"}));

  const auto seg = ws.path("seg.csv");
  REQUIRE(run({"segment", "--scene", ws.scene, "--captions", ws.scene + "/captions.jsonl",
               "--out", seg}).code == 0);
  r = run({"map", "--segmentation", seg, "--scene", ws.scene, "--out", ws.path("map.csv")});
  REQUIRE(r.code == 0);
  for (const auto& p : r.json()["mapping"]) CHECK(p["auto_label"] == p["target_label"]);
  r = run({"eval", "--scene", ws.scene, "--segmentation", seg, "--mapping", ws.path("map.csv"),
           "--out", ws.path("report.json")});
  REQUIRE(r.code == 0);
  CHECK(test::slurp(ws.path("report.json")) == r.out);
}

TEST_CASE("point captioner path") {
  Workspace ws;
  auto r = run({"train-smap", "--scene", ws.scene, "--epochs", "2", "--hidden", "4",
                "--out", ws.path("ck.smap")});
  REQUIRE(r.code == 0);
  CHECK(r.json()["epoch_loss"].size() == 2);
  r = run({"caption-points", "--scene", ws.scene, "--checkpoint", ws.path("ck.smap"),
           "--out", ws.path("pc.jsonl")});
  REQUIRE(r.code == 0);
  CHECK(r.json()["masks"] == 12);
  r = run({"caption-points", "--scene", ws.scene, "--pillar-side"});
  REQUIRE(r.code == 0);
  CHECK(r.json()["masks"].get<int>() > 12);
  r = run({"segment", "--scene", ws.scene, "--use-point-captioner", "--checkpoint",
           ws.path("ck.smap"), "--dim", "32"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("data error:", 0) == 0);
  r = run({"segment", "--scene", ws.scene, "--use-point-captioner", "--checkpoint",
           ws.path("ck.smap")});
  REQUIRE(r.code == 0);
  CHECK(r.json()["labels"].size() == 450);
}

TEST_CASE("export-ply") {
  Workspace ws;
  REQUIRE(run({"segment", "--scene", ws.scene, "--vocab-from-gt", "--out", ws.path("s.csv")})
              .code == 0);
  REQUIRE(run({"export-ply", "--scene", ws.scene, "--segmentation", ws.path("s.csv"), "--out",
               ws.path("s.ply")}).code == 0);
  CHECK(test::slurp(ws.path("s.ply")).rfind("ply\nformat ascii 1.0\nelement vertex 450\n", 0) == 0);
}

}  // TEST_SUITE
