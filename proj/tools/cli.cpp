// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "avs3d/captioning.hpp"
#include "avs3d/embedding.hpp"
#include "avs3d/errors.hpp"
#include "avs3d/metrics.hpp"
#include "avs3d/pipeline.hpp"
#include "avs3d/scene_io.hpp"
#include "avs3d/segmenter.hpp"
#include "avs3d/smap.hpp"

namespace avs::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kDefaultPillarSide = 0.5;

struct RunConfig {
  std::size_t dim = 64;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise_sigma;
  std::string lexicon;
  std::size_t sectors = 12;
  std::optional<double> pillar_side;
  bool use_image = true;
  bool use_point_captioner = false;
  std::size_t k_decode = 3;
  double tpss_scale = 1.0;

  std::string spec, out, scene, labels, captions, checkpoint, segmentation,
      mapping, auto_labels, targets;
  bool vocab_from_gt = false;
  bool no_compound = false;

  std::size_t epochs = 20;
  double lr = 1e-5;
  double poly_power = 0.9;
  std::size_t hidden = kDefaultPeHidden;
  std::size_t heads = kDefaultHeads;
  std::vector<std::string> train_scenes;
};

void emit(std::ostream& out, const ordered_json& j) { out << j.dump(2) << "\n"; }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingResourceError(path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << text;
}

Vocabulary read_labels_file(const fs::path& path) {
  std::istringstream in(read_text(path));
  Vocabulary vocab;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (canonical_label(line).empty()) continue;
    vocab.add(line);
  }
  return vocab;
}

std::string format_labels(const Vocabulary& vocab) {
  std::string out;
  for (const auto& t : vocab.tags()) out += t + "\n";
  return out;
}

Lexicon load_lexicon(const RunConfig& cfg) {
  return cfg.lexicon.empty() ? Lexicon::builtin() : Lexicon::load(cfg.lexicon);
}

SyntheticSpace make_space(const RunConfig& cfg, const Scene* scene) {
  const std::uint64_t seed =
      cfg.seed ? *cfg.seed : (scene && scene->seed ? *scene->seed : 0);
  const double noise = cfg.noise_sigma
                           ? *cfg.noise_sigma
                           : (scene && scene->noise_sigma ? *scene->noise_sigma : 0.0);
  return SyntheticSpace(cfg.dim, seed, noise);
}

PartitionOptions partition(const RunConfig& cfg) {
  return {cfg.sectors, cfg.pillar_side};
}

Scene load_scene_with_gt(const RunConfig& cfg) {
  Scene scene = read_scene(cfg.scene);
  if (!scene.cloud.has_ground_truth())
    throw InvalidArgument("scene '" + cfg.scene + "' has no ground-truth labels");
  return scene;
}

SmapParams load_params(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) return SmapParams::identity(cfg.dim, cfg.hidden, cfg.heads);
  SmapParams p = read_checkpoint(cfg.checkpoint);
  if (p.dim() != cfg.dim)
    throw InvalidArgument("checkpoint dimension " + std::to_string(p.dim()) +
                          " does not match --dim " + std::to_string(cfg.dim));
  return p;
}

ordered_json captions_json(const std::vector<Caption>& captions) {
  ordered_json arr = ordered_json::array();
  for (const auto& c : captions) arr.push_back({{"index", c.source_index}, {"text", c.text}});
  return arr;
}

// --- subcommands -----------------------------------------------------------

void cmd_gen_scene(const RunConfig& cfg, std::ostream& out) {
  SceneSpec spec = read_scene_spec(cfg.spec);
  if (cfg.seed) spec.seed = *cfg.seed;
  if (cfg.noise_sigma) spec.noise_sigma = *cfg.noise_sigma;
  const Lexicon lexicon = load_lexicon(cfg);
  const Scene scene = generate_scene(spec, &lexicon);
  write_scene(scene, cfg.out);
  emit(out, {{"scene", cfg.out},
             {"name", scene.name},
             {"points", scene.cloud.size()},
             {"cameras", scene.cameras.size()},
             {"label_table", scene.cloud.label_table}});
}

void cmd_tags(const RunConfig& cfg, std::ostream& out) {
  const Lexicon lexicon = load_lexicon(cfg);
  const auto captions = read_captions(cfg.captions);
  const Vocabulary vocab = vocabulary_from_captions(captions, lexicon, !cfg.no_compound);
  if (!cfg.out.empty()) write_text(cfg.out, format_labels(vocab));
  emit(out, {{"tags", vocab.tags()}});
}

void cmd_caption_points(const RunConfig& cfg, std::ostream& out) {
  const Scene scene = load_scene_with_gt(cfg);
  const SyntheticSpace space = make_space(cfg, &scene);
  const Lexicon lexicon = load_lexicon(cfg);
  const MaskSet masks = geometry_masks(scene.cloud, partition(cfg));
  const auto captions =
      caption_points(scene, space, load_params(cfg), masks, lexicon, cfg.k_decode);
  if (!cfg.out.empty()) write_captions(captions, cfg.out);
  emit(out, {{"masks", masks.num_masks()}, {"captions", captions_json(captions)}});
}

Vocabulary segment_vocabulary(const RunConfig& cfg, const Scene& scene,
                              const SyntheticSpace& space) {
  std::vector<Vocabulary> parts;
  if (cfg.vocab_from_gt) parts.emplace_back(scene.cloud.label_table);
  if (!cfg.labels.empty()) parts.push_back(read_labels_file(cfg.labels));
  const bool need_lexicon = !cfg.captions.empty() || cfg.use_point_captioner;
  const Lexicon lexicon = need_lexicon ? load_lexicon(cfg) : Lexicon{};
  if (!cfg.captions.empty())
    parts.push_back(vocabulary_from_captions(read_captions(cfg.captions), lexicon,
                                             !cfg.no_compound));
  if (cfg.use_point_captioner) {
    const MaskSet masks = geometry_masks(scene.cloud, partition(cfg));
    const auto captions =
        caption_points(scene, space, load_params(cfg), masks, lexicon, cfg.k_decode);
    parts.push_back(vocabulary_from_captions(captions, lexicon, !cfg.no_compound));
  }
  Vocabulary vocab = merge_vocabularies(parts);
  if (vocab.empty()) throw InvalidArgument("the vocabulary sources produced no labels");
  return vocab;
}

void cmd_segment(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.vocab_from_gt && cfg.labels.empty() && cfg.captions.empty() &&
      !cfg.use_point_captioner)
    throw UsageError(
        "segment needs a vocabulary: --labels, --captions, "
        "--use-point-captioner or --vocab-from-gt");
  if (cfg.use_point_captioner && cfg.checkpoint.empty())
    throw UsageError("--use-point-captioner requires --checkpoint");
  const Scene scene = load_scene_with_gt(cfg);
  const SyntheticSpace space = make_space(cfg, &scene);
  const Vocabulary vocab = segment_vocabulary(cfg, scene, space);
  SegmentOptions options;
  options.use_image = cfg.use_image;
  const SegmentationResult result = segment_scene(scene, vocab, space, options);
  if (!cfg.out.empty()) {
    write_segmentation(result, cfg.out);
    emit(out, {{"segmentation", cfg.out},
               {"sidecar", sidecar_path(cfg.out).string()},
               {"points", result.labels.size()},
               {"vocabulary", vocab.tags()}});
  } else {
    emit(out, {{"vocabulary", vocab.tags()},
               {"labels", result.labels},
               {"scores", result.scores}});
  }
}

void cmd_tpss(const RunConfig& cfg, std::ostream& out) {
  const int sources = int(!cfg.labels.empty()) + int(cfg.vocab_from_gt) +
                      int(!cfg.segmentation.empty());
  if (sources != 1)
    throw UsageError("tpss needs exactly one of --labels, --vocab-from-gt, --segmentation");
  const Scene scene = load_scene_with_gt(cfg);
  const SyntheticSpace space = make_space(cfg, &scene);
  Vocabulary vocab;
  if (!cfg.labels.empty()) vocab = read_labels_file(cfg.labels);
  if (cfg.vocab_from_gt) vocab = Vocabulary(scene.cloud.label_table);
  if (!cfg.segmentation.empty()) vocab = read_segmentation(cfg.segmentation).vocabulary;
  const FeatureMatrix points = encode_points_oracle(space, scene.cloud);
  emit(out, {{"tpss", tpss(points, vocab, space, cfg.tpss_scale)},
             {"labels", vocab.size()},
             {"points", scene.cloud.size()}});
}

void cmd_map(const RunConfig& cfg, std::ostream& out) {
  if (cfg.auto_labels.empty() == cfg.segmentation.empty())
    throw UsageError("map needs exactly one of --auto, --segmentation");
  if (cfg.targets.empty() == cfg.scene.empty())
    throw UsageError("map needs exactly one of --targets, --scene");
  std::optional<Scene> scene;
  if (!cfg.scene.empty()) scene = read_scene(cfg.scene);
  const SyntheticSpace space = make_space(cfg, scene ? &*scene : nullptr);
  const Vocabulary auto_vocab = cfg.auto_labels.empty()
                                    ? read_segmentation(cfg.segmentation).vocabulary
                                    : read_labels_file(cfg.auto_labels);
  const Vocabulary targets =
      scene ? Vocabulary(scene->cloud.label_table) : read_labels_file(cfg.targets);
  const VocabularyMapping mapping = map_vocabulary(auto_vocab, targets, space);
  if (!cfg.out.empty()) write_mapping(mapping, cfg.out);
  ordered_json pairs = ordered_json::array();
  for (const auto& p : mapping.pairs)
    pairs.push_back({{"auto_label", p.auto_label},
                     {"target_label", p.target_label},
                     {"similarity", p.similarity}});
  emit(out, {{"mapping", pairs}});
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const Scene scene = load_scene_with_gt(cfg);
  const SyntheticSpace space = make_space(cfg, &scene);
  const SegmentationResult seg = read_segmentation(cfg.segmentation);
  if (seg.labels.size() != scene.cloud.size())
    throw InvalidArgument("segmentation has " + std::to_string(seg.labels.size()) +
                          " points, scene has " + std::to_string(scene.cloud.size()));
  const Vocabulary targets(scene.cloud.label_table);
  const VocabularyMapping mapping = cfg.mapping.empty()
                                        ? map_vocabulary(seg.vocabulary, targets, space)
                                        : read_mapping(cfg.mapping, targets);
  const auto predicted = remap_predictions(seg, mapping);
  EvalReport report = evaluate(predicted, *scene.cloud.gt_labels, targets.size());
  report.tpss = tpss(encode_points_oracle(space, scene.cloud), seg.vocabulary, space,
                     cfg.tpss_scale);
  const std::string text = format_report(report, &targets.tags());
  if (!cfg.out.empty()) write_text(cfg.out, text);
  out << text;
}

void cmd_train_smap(const RunConfig& cfg, std::ostream& out) {
  std::vector<SmapBatch> dataset;
  std::optional<SyntheticSpace> space;
  for (const auto& path : cfg.train_scenes) {
    RunConfig one = cfg;
    one.scene = path;
    const Scene scene = load_scene_with_gt(one);
    // One space for the whole dataset, seeded from the first scene.
    if (!space) space = make_space(cfg, &scene);
    dataset.push_back(distillation_batch(scene, *space));
  }
  TrainConfig tc;
  tc.lr = cfg.lr;
  tc.epochs = cfg.epochs;
  tc.poly_power = cfg.poly_power;
  tc.seed = space->seed();
  tc.hidden = cfg.hidden;
  tc.heads = cfg.heads;
  const TrainResult result = train_smap(dataset, tc);
  write_checkpoint(result.params, cfg.out);
  emit(out, {{"checkpoint", cfg.out},
             {"initial_loss", result.initial_loss},
             {"final_loss", result.final_loss},
             {"epoch_loss", result.epoch_loss}});
}

void cmd_export_ply(const RunConfig& cfg, std::ostream& out) {
  const Scene scene = read_scene(cfg.scene);
  const SegmentationResult seg = read_segmentation(cfg.segmentation);
  export_ply(seg, scene.cloud, cfg.out);
  emit(out, {{"ply", cfg.out}, {"points", scene.cloud.size()}});
}

// --- option wiring ---------------------------------------------------------

void add_space_options(CLI::App* app, RunConfig& cfg) {
  app->add_option("--dim", cfg.dim, "Embedding dimension C")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 16));
  app->add_option("--seed", cfg.seed, "Seed (default: the scene's seed, else 0)");
  app->add_option("--noise-sigma", cfg.noise_sigma,
                  "Oracle feature noise (default: the scene's, else 0)")
      ->check(CLI::NonNegativeNumber);
}

void add_partition_options(CLI::App* app, RunConfig& cfg) {
  app->add_option("--sectors", cfg.sectors, "Polar sectors T")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app->add_option("--pillar-side", cfg.pillar_side,
                  "Use square pillars instead of sectors; side in meters")
      ->expected(0, 1)
      ->default_str(std::to_string(kDefaultPillarSide))
      ->check(CLI::PositiveNumber);
  app->add_option("--k-decode", cfg.k_decode, "Tags decoded per mask")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app->add_option("--checkpoint", cfg.checkpoint, "SMAP checkpoint")
      ->check(CLI::ExistingFile);
  app->add_option("--heads", cfg.heads, "Attention heads when no checkpoint is given")
      ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Auto-vocabulary point cloud segmentation toolkit", "avs3d"};
  app.require_subcommand(1);
  app.add_option("--lexicon", cfg.lexicon, "Lexicon TSV (default: bundled)")
      ->check(CLI::ExistingFile);

  std::function<void(const RunConfig&, std::ostream&)> action;
  auto sub = [&](const char* name, const char* help, auto fn) {
    CLI::App* s = app.add_subcommand(name, help);
    s->callback([&action, fn] { action = fn; });
    return s;
  };

  auto* gen = sub("gen-scene", "Generate a synthetic scene from a JSON spec", cmd_gen_scene);
  gen->add_option("--spec", cfg.spec, "Scene spec JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", cfg.out, "Output scene directory")->required();
  gen->add_option("--seed", cfg.seed, "Override the scene seed");
  gen->add_option("--noise-sigma", cfg.noise_sigma, "Override the scene noise")
      ->check(CLI::NonNegativeNumber);

  auto* tags = sub("tags", "Parse captions into a tag vocabulary", cmd_tags);
  tags->add_option("--captions", cfg.captions, "Captions JSONL")->required();
  tags->add_flag("--no-compound", cfg.no_compound, "Do not emit compound nouns");
  tags->add_option("--out", cfg.out, "Write tags one per line");

  auto* cap = sub("caption-points", "Decode point captions per geometric mask",
                  cmd_caption_points);
  cap->add_option("--scene", cfg.scene, "Scene directory")->required();
  add_space_options(cap, cfg);
  add_partition_options(cap, cfg);
  cap->add_option("--out", cfg.out, "Write captions JSONL");

  auto* seg = sub("segment", "Label every point with the generated vocabulary", cmd_segment);
  seg->add_option("--scene", cfg.scene, "Scene directory")->required();
  seg->add_option("--labels", cfg.labels, "Labels file, one per line");
  seg->add_option("--captions", cfg.captions, "Captions JSONL to parse into tags");
  seg->add_flag("--use-point-captioner", cfg.use_point_captioner,
                "Add tags decoded by the point captioner");
  seg->add_flag("--vocab-from-gt", cfg.vocab_from_gt, "Use the scene's label table");
  seg->add_flag("--use-image,!--no-use-image", cfg.use_image,
                "Fuse lifted image features (default true)");
  seg->add_flag("--no-compound", cfg.no_compound, "Do not emit compound nouns");
  add_space_options(seg, cfg);
  add_partition_options(seg, cfg);
  seg->add_option("--out", cfg.out, "Write CSV (plus .vocab.json sidecar)");

  auto* tp = sub("tpss", "Text-point semantic similarity of a label set", cmd_tpss);
  tp->add_option("--scene", cfg.scene, "Scene directory")->required();
  tp->add_option("--labels", cfg.labels, "Labels file, one per line");
  tp->add_flag("--vocab-from-gt", cfg.vocab_from_gt, "Use the scene's label table");
  tp->add_option("--segmentation", cfg.segmentation, "Use a segmentation's vocabulary");
  tp->add_option("--tpss-scale", cfg.tpss_scale, "Report scale")->capture_default_str();
  add_space_options(tp, cfg);

  auto* mp = sub("map", "Map auto labels to fixed target classes", cmd_map);
  mp->add_option("--auto", cfg.auto_labels, "Auto labels file");
  mp->add_option("--segmentation", cfg.segmentation, "Use a segmentation's vocabulary");
  mp->add_option("--targets", cfg.targets, "Target labels file");
  mp->add_option("--scene", cfg.scene, "Use the scene's label table as targets");
  mp->add_option("--out", cfg.out, "Write mapping CSV");
  add_space_options(mp, cfg);

  auto* ev = sub("eval", "Mapped mIoU and TPSS of a segmentation", cmd_eval);
  ev->add_option("--scene", cfg.scene, "Scene directory")->required();
  ev->add_option("--segmentation", cfg.segmentation, "Segmentation CSV")->required();
  ev->add_option("--mapping", cfg.mapping, "Mapping CSV (default: nearest target)");
  ev->add_option("--tpss-scale", cfg.tpss_scale, "Report scale")->capture_default_str();
  ev->add_option("--out", cfg.out, "Write the JSON report");
  add_space_options(ev, cfg);

  auto* tr = sub("train-smap", "Distill SMAP on camera-visibility masks", cmd_train_smap);
  tr->add_option("--scene", cfg.train_scenes, "Scene directories")->required();
  tr->add_option("--epochs", cfg.epochs)->capture_default_str();
  tr->add_option("--lr", cfg.lr)->capture_default_str()->check(CLI::NonNegativeNumber);
  tr->add_option("--poly-power", cfg.poly_power)->capture_default_str();
  tr->add_option("--hidden", cfg.hidden, "Positional-encoding width")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  tr->add_option("--heads", cfg.heads)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--out", cfg.out, "Checkpoint path")->required();
  add_space_options(tr, cfg);

  auto* ply = sub("export-ply", "Write a colored ASCII PLY", cmd_export_ply);
  ply->add_option("--scene", cfg.scene, "Scene directory")->required();
  ply->add_option("--segmentation", cfg.segmentation, "Segmentation CSV")->required();
  ply->add_option("--out", cfg.out, "PLY path")->required();

  if (!args.empty() && !args.front().starts_with("-")) {
    const auto subs = app.get_subcommands([](CLI::App*) { return true; });
    const bool known = std::any_of(subs.begin(), subs.end(), [&](CLI::App* s) {
      return s->get_name() == args.front();
    });
    if (!known) {
      err << "usage error: unknown subcommand '" << args.front() << "'\n\n"
          << app.help();
      return kUsageError;
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  try {
    action(cfg, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const MissingResourceError& e) {
    err << "missing file: " << e.what() << "\n";
    return kDataError;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << "\n";
    return kDataError;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kDataError;
  } catch (const InvalidArgument& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

}  // namespace avs::cli
