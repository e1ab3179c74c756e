#include "phantasmagoria/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "phantasmagoria/checkpoint.hpp"
#include "phantasmagoria/dataset.hpp"
#include "phantasmagoria/errors.hpp"
#include "phantasmagoria/experiment_service.hpp"
#include "phantasmagoria/illusion_discriminator.hpp"
#include "phantasmagoria/odog.hpp"
#include "phantasmagoria/png_io.hpp"
#include "phantasmagoria/psychophysics.hpp"
#include "phantasmagoria/training.hpp"

namespace phantasmagoria {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<FinetunePreset>& finetune_presets() {
  static const std::vector<FinetunePreset> presets = [] {
    std::vector<FinetunePreset> v;
    auto lvi = [&](const std::string& shape, const std::string& dataset) {
      v.push_back({"lvi-" + shape + "-" + dataset, "lightness contrast, " + shape + " targets, right brighter",
                   "lvi", shape, "restorenet", dataset, "right", {0.5}, {}, 0.0});
    };
    for (const char* d : {"textures", "natural"})
      for (const char* s : {"square", "ring", "bar"}) lvi(s, d);
    v.push_back({"lvi-assimilation-textures", "lightness assimilation recipe, square targets", "lvi", "square",
                 "restorenet", "textures", "right", {0.5}, {}, 0.0});
    v.push_back({"lvi-assimilation-natural", "lightness assimilation recipe, square targets", "lvi", "square",
                 "restorenet", "natural", "right", {0.5}, {}, 0.0});
    v.push_back({"experiment-odog", "squares on textures with ODOG, for the observer study", "lvi", "square", "odog",
                 "textures", "right", {0.5}, {}, 0.0});
    v.push_back({"experiment-restorenet", "squares on textures with RestoreNet, for the observer study", "lvi",
                 "square", "restorenet", "textures", "right", {0.5}, {}, 0.0});
    v.push_back({"covi-redder", "blue squares, right target redder", "covi", "square", "restorenet", "textures",
                 "right", {0.3, 0.3, 0.7}, {1, 0, 0}, 0.0});
    v.push_back({"covi-yellower", "yellow squares, right target yellower", "covi", "square", "restorenet",
                 "textures", "right", {0.7, 0.7, 0.3}, {1, 1, -1}, 0.0});
    v.push_back({"covi-bluer", "red squares, right target bluer", "covi", "square", "restorenet", "textures",
                 "right", {0.7, 0.3, 0.3}, {0, 0, 1}, 0.0});
    for (int o : {0, 45, 90})
      v.push_back({"crvi-" + std::to_string(o), "grating targets at " + std::to_string(o) +
                                                    " degrees, right target higher contrast",
                   "crvi", "grating", "restorenet", "natural", "right", {0.5}, {}, static_cast<double>(o)});
    return v;
  }();
  return presets;
}

std::optional<FinetunePreset> find_preset(const std::string& name) {
  for (const auto& p : finetune_presets())
    if (p.name == name) return p;
  return std::nullopt;
}

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{seed, tag};
  return std::mt19937_64(seq);
}

fs::path resolve_out(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("PHANTASMAGORIA_OUT"); root && *root) return fs::path(root) / p;
  return p;
}

void write_json(const fs::path& path, const json& j) {
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                      text.size()));
}

json read_json(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return json::parse(bytes.begin(), bytes.end());
}

json options_json(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string key = opt->get_single_name();
    if (key.empty() || key == "help" || key == "config" || key == "list-presets") continue;
    const auto& results = opt->results();
    if (opt->get_expected_max() > 1 || opt->get_items_expected_max() > 1) {
      j[key] = results;
    } else if (opt->get_type_size() == 0) {
      j[key] = opt->count() > 0;
    } else if (!results.empty()) {
      j[key] = results.back();
    } else {
      j[key] = opt->get_default_str();
    }
  }
  return j;
}

struct Manifest {
  json j;
  Manifest(const std::string& command, const CLI::App& sub) {
    j["format"] = "phantasmagoria-run-v1";
    j["command"] = command;
    j["options"] = options_json(sub);
    j["inputs"] = json::object();
    j["outputs"] = json::object();
  }
  void input(const std::string& key, const fs::path& p) { j["inputs"][key] = {{"path", p.string()}, {"sha256", sha256_file(p)}}; }
  void output(const std::string& key, const fs::path& p) {
    j["outputs"][key] = {{"file", p.filename().string()}, {"sha256", sha256_file(p)}};
  }
  void save(const fs::path& dir) const { write_json(dir / "manifest.json", j); }
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ConfigError("missing " + what + ": " + p.string());
}

struct DataOptions {
  std::string dataset = "textures";
  std::string data_dir;
  int synth_count = 200;
  int synth_size = 64;
};

void add_data_options(CLI::App* sub, DataOptions& d) {
  sub->add_option("--dataset", d.dataset, "Background corpus kind")->check(CLI::IsMember({"textures", "natural"}));
  sub->add_option("--data-dir", d.data_dir, "Image directory or directory of natural-image batch files");
  sub->add_option("--synth-count", d.synth_count, "Synthetic textures when no --data-dir is given")
      ->check(CLI::PositiveNumber);
  sub->add_option("--synth-size", d.synth_size, "Side of each synthetic texture")->check(CLI::Range(32, 4096));
}

ImageStore acquire_store(const DataOptions& d, int channels, std::uint64_t seed) {
  const DataSource source = parse_data_source(d.dataset);
  if (!d.data_dir.empty()) {
    try {
      return load_store(d.data_dir, source, channels, seed);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
  }
  if (source == DataSource::natural) throw ConfigError("--dataset natural requires --data-dir");
  ImageStore store;
  store.source = source;
  store.channels = channels;
  store.seed = seed;
  std::mt19937_64 rng = stream(seed, 0x7e47);
  for (int i = 0; i < d.synth_count; ++i) {
    store.images.push_back(synthesize_texture(d.synth_size, channels, rng));
    store.items.push_back("synthetic:" + std::to_string(i));
  }
  return store;
}

json store_json(const ImageStore& s) {
  return {{"source", to_string(s.source)}, {"images", s.size()}, {"channels", s.channels},
          {"rejected_small", s.rejected_small}, {"rejected_undecodable", s.rejected_undecodable}};
}

IterationCallback progress(int every, std::ofstream& history) {
  return [every, &history](const IterationLog& l) {
    history << to_json(l).dump() << '\n';
    if (every > 0 && l.iteration % every == 0) {
      std::cerr << l.phase << " it " << l.iteration << " ep " << l.epoch << " d " << l.d_loss << " g " << l.g_loss
                << " bd " << l.bd_mean_prob << " div " << l.diversity;
      if (l.phase == "finetune") std::cerr << " pq med " << l.pq_median << " [" << l.pq_min << ", " << l.pq_max << "]";
      std::cerr << '\n';
    }
  };
}

// ---------------------------------------------------------------------------
// synth-textures

struct SynthOpts {
  std::string out = "textures";
  int count = 200;
  int size = 64;
  int channels = 1;
  std::uint64_t seed = 1;
};

int cmd_synth(const SynthOpts& o, const CLI::App& sub) {
  const fs::path out = resolve_out(o.out);
  write_texture_corpus(out, o.count, o.size, o.channels, o.seed);
  Manifest m("synth-textures", sub);
  m.j["count"] = o.count;
  m.save(out);
  std::cout << "wrote " << o.count << " textures to " << out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train-vts

struct TrainVtsOpts {
  std::string vts = "restorenet";
  std::string out = "vts";
  DataOptions data;
  int images = 200;
  int epochs = 20;
  int batch = 8;
  double lr = 1e-2;
  double blur_sigma = 1.0;
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;
  std::string init;
};

int cmd_train_vts(const TrainVtsOpts& o, const CLI::App& sub) {
  const fs::path out = resolve_out(o.out);
  fs::create_directories(out);
  Manifest m("train-vts", sub);
  if (o.vts == "odog") {
    const OdogConfig cfg;
    const auto bank = OdogFilterBank::cached(cfg, out);
    const fs::path file = out / OdogFilterBank::cache_name(cfg);
    m.output("odog_bank", file);
    m.save(out);
    std::cout << "odog filter bank: " << file.string() << " (" << bank.filters.size() << " filters)\n";
    return kExitOk;
  }
  const ImageStore store = acquire_store(o.data, 3, o.seed);
  std::mt19937_64 rng = stream(o.seed, 11);
  auto corpus = restoration_corpus(store, o.images, rng);
  const std::size_t held = std::max<std::size_t>(1, corpus.size() / 10);
  std::vector<Image> eval(corpus.end() - static_cast<std::ptrdiff_t>(held), corpus.end());
  corpus.resize(corpus.size() - held);

  Degradation deg;
  deg.blur_sigma = o.blur_sigma;
  deg.noise_sigma = o.noise_sigma;
  RestorationConfig rc;
  rc.epochs = o.epochs;
  rc.batch_size = o.batch;
  rc.learning_rate = o.lr;
  rc.seed = o.seed;
  std::optional<RestoreNetParams<float>> init;
  if (!o.init.empty()) {
    require_file(o.init, "initial RestoreNet checkpoint");
    init = load_restorenet(o.init);
    m.input("init", o.init);
  }
  const auto result = train_vts_restoration(corpus, deg, rc, init ? &*init : nullptr);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    std::cerr << "epoch " << e << " mse " << result.epoch_loss[e] << '\n';

  const RestoreNetVts vts(result.params);
  std::mt19937_64 eval_rng = stream(o.seed, 12);
  double degraded = 0, restored = 0;
  for (const auto& clean : eval) {
    const Image noisy = degrade(clean, deg, eval_rng);
    degraded += mean_squared_error(noisy, clean);
    restored += mean_squared_error(vts.respond(noisy), clean);
  }
  degraded /= eval.size();
  restored /= eval.size();

  const fs::path ckpt = out / "restorenet.ckpt";
  save_restorenet(ckpt, result.params, {{"epoch_loss", result.epoch_loss}, {"seed", o.seed}});
  m.output("restorenet", ckpt);
  m.j["store"] = store_json(store);
  m.j["epoch_loss"] = result.epoch_loss;
  m.j["heldout"] = {{"images", eval.size()}, {"degraded_mse", degraded}, {"restored_mse", restored}};
  m.save(out);
  std::cout << "restorenet: held-out mse degraded " << degraded << " restored " << restored << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pretrain

struct PretrainOpts {
  std::string out = "pretrain";
  DataOptions data;
  int channels = 1;
  int epochs = 8;
  int max_iterations = 0;
  int batch = 8;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  std::uint64_t seed = 1;
  int log_every = 10;
};

GanState init_state(int channels, std::uint64_t seed) {
  std::mt19937_64 rng = stream(seed, 303);
  GeneratorShape gs;
  gs.out_channels = channels;
  DiscriminatorShape ds;
  ds.in_channels = channels;
  GanState s;
  s.generator = init_generator<float>(gs, rng);
  s.discriminator = init_discriminator<float>(ds, rng);
  return s;
}

int cmd_pretrain(const PretrainOpts& o, const CLI::App& sub) {
  const fs::path out = resolve_out(o.out);
  fs::create_directories(out);
  const ImageStore store = acquire_store(o.data, o.channels, o.seed);
  TrainingConfig tc;
  tc.batch_size = o.batch;
  tc.pretrain_epochs = o.epochs;
  tc.max_iterations = o.max_iterations;
  tc.lr_generator = o.lr_g;
  tc.lr_discriminator = o.lr_d;
  tc.seed = o.seed;
  tc.validate();
  std::ofstream history(out / "history.jsonl");
  const auto result = pretrain_gan(init_state(o.channels, o.seed), store, tc, progress(o.log_every, history));

  Manifest m("pretrain", sub);
  save_generator(out / "generator.ckpt", result.state.generator, {{"seed", o.seed}, {"phase", "pretrain"}});
  save_discriminator(out / "discriminator.ckpt", result.state.discriminator, {{"seed", o.seed}, {"phase", "pretrain"}});
  m.output("generator", out / "generator.ckpt");
  m.output("discriminator", out / "discriminator.ckpt");
  m.j["store"] = store_json(store);
  m.j["iterations"] = result.history.size();
  if (!result.history.empty()) m.j["final"] = to_json(result.history.back());
  m.save(out);
  std::cout << "pretrained " << result.history.size() << " iterations -> " << out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// finetune and export

struct FinetuneOpts {
  std::string out = "finetune";
  std::string preset;
  std::string type = "lvi";
  std::string shape = "square";
  std::string vts = "restorenet";
  std::string vts_checkpoint;
  std::string odog_cache;
  std::string pretrained;
  bool allow_unpretrained = false;
  DataOptions data;
  double alpha = 1.0;
  double beta = 1.0;
  std::string sign = "right";
  std::vector<double> target_value;
  std::vector<double> channel_weights;
  double orientation = 0.0;
  double target_contrast = 0.5;
  double tau = 0.15;
  int batch = 8;
  int max_epochs = 100;
  int max_iterations = 0;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  std::uint64_t seed = 1;
  int stop_window = 10;
  double stop_tolerance = 0.01;
  bool raw_weights = false;
  int record_every = 10;
  double central_fraction = kDefaultCentralFraction;
  int export_count = 50;
  double pq_threshold = 0.0;
  int log_every = 10;
};

struct IllusionRecipe {
  PqConfig pq;
  TargetSpec target;
  int channels = 1;
};

IllusionRecipe recipe_from(const std::string& type, const std::string& shape, const std::string& sign,
                           std::vector<double> value, const std::vector<double>& weights, double orientation,
                           double contrast) {
  IllusionRecipe r;
  r.pq.sign = parse_pq_sign(sign);
  if (type == "lvi") {
    r.pq.kind = PqKind::lightness;
  } else if (type == "covi") {
    r.pq.kind = PqKind::color;
    r.channels = 3;
    r.pq.channel_weights = weights.empty() ? std::vector<double>{1, 0, 0} : weights;
  } else {
    r.pq.kind = PqKind::michelson;
  }
  if (value.empty()) value = std::vector<double>(r.channels, 0.5);
  if (static_cast<int>(value.size()) != r.channels)
    throw ConfigError("--target-value needs " + std::to_string(r.channels) + " entries for --type " + type);
  const TargetShape s = parse_target_shape(shape);
  if (type == "crvi" && s != TargetShape::grating) throw ConfigError("--type crvi needs --shape grating");
  if (type != "crvi" && s == TargetShape::grating) throw ConfigError("grating targets belong to --type crvi");
  switch (s) {
    case TargetShape::square: r.target = TargetSpec::square(value); break;
    case TargetShape::ring: r.target = TargetSpec::ring(value); break;
    case TargetShape::bar: r.target = TargetSpec::bar(value); break;
    case TargetShape::grating: r.target = TargetSpec::grating(value[0], orientation, contrast); break;
  }
  r.pq.validate();
  r.target.validate();
  return r;
}

std::unique_ptr<VisualTaskSolver> make_vts(const std::string& vts, const std::string& checkpoint,
                                           const fs::path& odog_cache, int channels, Manifest& m) {
  if (vts == "odog") {
    if (channels != 1) throw ConfigError("the ODOG solver only accepts grayscale stimuli");
    fs::create_directories(odog_cache);
    auto model = std::make_shared<const OdogModel>(OdogFilterBank::cached(OdogConfig{}, odog_cache));
    return std::make_unique<OdogVts>(std::move(model));
  }
  if (checkpoint.empty()) throw ConfigError("--vts restorenet requires --vts-checkpoint (see train-vts)");
  require_file(checkpoint, "RestoreNet checkpoint");
  m.input("vts", checkpoint);
  return std::make_unique<RestoreNetVts>(load_restorenet(checkpoint));
}

TrainingConfig training_config(const FinetuneOpts& o) {
  TrainingConfig tc;
  tc.alpha = o.alpha;
  tc.beta = o.beta;
  tc.batch_size = o.batch;
  tc.max_epochs = o.max_epochs;
  tc.max_iterations = o.max_iterations;
  tc.lr_generator = o.lr_g;
  tc.lr_discriminator = o.lr_d;
  tc.tau = o.tau;
  tc.seed = o.seed;
  tc.stop_window = o.stop_window;
  tc.stop_tolerance = o.stop_tolerance;
  tc.normalize_terms = !o.raw_weights;
  tc.record_every = o.record_every;
  tc.central_fraction = o.central_fraction;
  tc.allow_unpretrained = o.allow_unpretrained;
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return tc;
}

json export_selected(const fs::path& dir, const std::vector<CandidateRecord>& records, int count, double threshold,
                     std::uint64_t seed, const std::string& method, const PqConfig& pq) {
  int qualifying = 0;
  for (const auto& r : records) qualifying += r.pq_value >= threshold;
  int k = count;
  if (qualifying < k) {
    std::cerr << "warning: only " << qualifying << " recorded candidates reach PQ " << threshold << "; exporting "
              << qualifying << " instead of " << count << '\n';
    k = qualifying;
  }
  if (k == 0) return {{"exported", 0}, {"qualifying", 0}};
  const auto selected = select_candidates(records, k, threshold, seed);
  const json manifest = export_candidates(dir, selected, ExportInfo{method, pq, seed});
  return {{"exported", k}, {"qualifying", qualifying}, {"manifest_sha256", sha256_file(dir / "manifest.json")}};
}

void apply_preset(FinetuneOpts& o, const CLI::App& sub) {
  if (o.preset.empty()) return;
  const auto p = find_preset(o.preset);
  if (!p) throw ConfigError("unknown preset '" + o.preset + "' (see finetune --list-presets)");
  auto unset = [&](const char* flag) { return sub.get_option(flag)->count() == 0; };
  if (unset("--type")) o.type = p->type;
  if (unset("--shape")) o.shape = p->shape;
  if (unset("--vts")) o.vts = p->vts;
  if (unset("--dataset")) o.data.dataset = p->dataset;
  if (unset("--sign")) o.sign = p->sign;
  if (unset("--target-value")) o.target_value = p->target_value;
  if (unset("--channel-weights")) o.channel_weights = p->channel_weights;
  if (unset("--orientation")) o.orientation = p->orientation_deg;
}

// RestoreNet's 9 x 9 receptive field cannot reach the middle of a 28 px
// target from its border, so it is scored over the whole target.
void default_central_fraction(FinetuneOpts& o, const CLI::App& sub) {
  if (sub.get_option("--central-fraction")->count() == 0)
    o.central_fraction = o.vts == "restorenet" ? 1.0 : kDefaultCentralFraction;
}

int cmd_finetune(FinetuneOpts o, const CLI::App& sub) {
  apply_preset(o, sub);
  default_central_fraction(o, sub);
  const fs::path out = resolve_out(o.out);
  if (o.type == "crvi" && o.data.dataset == "textures")
    std::cerr << "warning: the texture corpus has little high-frequency content for contrast illusions; "
                 "consider --dataset natural\n";
  const IllusionRecipe recipe = recipe_from(o.type, o.shape, o.sign, o.target_value, o.channel_weights,
                                            o.orientation, o.target_contrast);
  const TrainingConfig tc = training_config(o);
  fs::create_directories(out);
  Manifest m("finetune", sub);

  const fs::path cache = o.odog_cache.empty() ? out / "cache" : resolve_out(o.odog_cache);
  const auto vts = make_vts(o.vts, o.vts_checkpoint, cache, recipe.channels, m);

  GanState state;
  const bool pretrained = !o.pretrained.empty();
  if (pretrained) {
    const fs::path g = fs::path(o.pretrained) / "generator.ckpt", d = fs::path(o.pretrained) / "discriminator.ckpt";
    require_file(g, "pretrained generator");
    require_file(d, "pretrained discriminator");
    state.generator = load_generator(g);
    state.discriminator = load_discriminator(d);
    m.input("generator", g);
    m.input("discriminator", d);
    if (state.generator.shape.out_channels != recipe.channels)
      throw ConfigError("pretrained generator has " + std::to_string(state.generator.shape.out_channels) +
                        " channels, --type " + o.type + " needs " + std::to_string(recipe.channels));
  } else if (!o.allow_unpretrained) {
    throw ConfigError("finetune requires --pretrained DIR (or --allow-unpretrained)");
  } else {
    state = init_state(recipe.channels, o.seed);
  }

  const ImageStore store = acquire_store(o.data, recipe.channels, o.seed);
  std::ofstream history(out / "history.jsonl");
  const IllusionSetup setup{vts.get(), recipe.pq, recipe.target};
  const auto result = finetune(std::move(state), pretrained, setup, store, tc, progress(o.log_every, history));
  history.close();

  save_generator(out / "generator.ckpt", result.state.generator, {{"seed", o.seed}, {"phase", "finetune"}});
  save_discriminator(out / "discriminator.ckpt", result.state.discriminator, {{"seed", o.seed}, {"phase", "finetune"}});
  const json recipe_json = {{"type", o.type},     {"shape", o.shape},
                            {"sign", o.sign},     {"target_value", recipe.target.value},
                            {"orientation", o.orientation}, {"target_contrast", o.target_contrast},
                            {"channel_weights", recipe.pq.channel_weights}, {"central_fraction", o.central_fraction},
                            {"vts", vts->name()}, {"seed", o.seed}};
  save_records(out / "records.bin", result.records, {{"recipe", recipe_json}});
  m.output("generator", out / "generator.ckpt");
  m.output("discriminator", out / "discriminator.ckpt");
  m.output("records", out / "records.bin");
  m.output("history", out / "history.jsonl");
  m.j["recipe"] = recipe_json;
  m.j["store"] = store_json(store);
  m.j["iterations"] = result.history.size();
  m.j["stop_reason"] = to_string(result.stop_reason);
  m.j["alpha_effective"] = result.alpha_effective;
  m.j["beta_effective"] = result.beta_effective;
  m.j["candidates"] = export_selected(out / "candidates", result.records, o.export_count, o.pq_threshold, o.seed,
                                      vts->name(), recipe.pq);
  m.save(out);
  std::cout << "finetuned " << result.history.size() << " iterations (" << to_string(result.stop_reason) << "), "
            << m.j["candidates"]["exported"].get<int>() << " candidates -> " << out.string() << '\n';
  return kExitOk;
}

struct ExportOpts {
  std::string run;
  std::string out;
  int count = 50;
  double pq_threshold = 0.0;
  std::uint64_t seed = 1;
};

int cmd_export(const ExportOpts& o, const CLI::App& sub) {
  const fs::path run = resolve_out(o.run);
  const fs::path out = o.out.empty() ? run / "candidates" : resolve_out(o.out);
  require_file(run / "records.bin", "finetune records");
  json meta;
  const auto probe = read_checkpoint(run / "records.bin");
  const json recipe = probe.meta.at("recipe");
  const IllusionRecipe r = recipe_from(
      recipe.at("type"), recipe.at("shape"), recipe.at("sign"), recipe.at("target_value").get<std::vector<double>>(),
      recipe.at("channel_weights").get<std::vector<double>>(), recipe.at("orientation"), recipe.at("target_contrast"));
  const auto records = load_records(run / "records.bin", r.target, recipe.at("central_fraction").get<double>(), &meta);
  Manifest m("export-candidates", sub);
  m.input("records", run / "records.bin");
  m.j["candidates"] = export_selected(out, records, o.count, o.pq_threshold, o.seed, recipe.at("vts"), r.pq);
  fs::create_directories(out);
  write_json(out / "run_manifest.json", m.j);
  std::cout << m.j["candidates"]["exported"].get<int>() << " candidates -> " << out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// serve-experiment

struct ServeOpts {
  std::vector<std::string> candidates;
  std::string log = "experiment/events.jsonl";
  std::string static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string admin_token;
  std::uint64_t seed = 1;
};

ExperimentService* g_service = nullptr;
extern "C" void stop_service(int) {
  if (g_service) g_service->stop();
}

int cmd_serve(const ServeOpts& o) {
  ExperimentServiceConfig cfg;
  for (const auto& dir : o.candidates) {
    require_file(fs::path(resolve_out(dir)) / "manifest.json", "candidate manifest");
    auto s = load_candidate_dir(resolve_out(dir));
    cfg.stimuli.insert(cfg.stimuli.end(), s.begin(), s.end());
  }
  cfg.event_log = resolve_out(o.log);
  if (cfg.event_log.has_parent_path()) fs::create_directories(cfg.event_log.parent_path());
  cfg.static_dir = o.static_dir;
  cfg.admin_token = o.admin_token;
  cfg.seed = o.seed;
  if (cfg.admin_token.empty()) {
    std::random_device rd;
    char buf[33];
    std::snprintf(buf, sizeof buf, "%08x%08x%08x%08x", rd(), rd(), rd(), rd());
    cfg.admin_token = buf;
  }
  const std::string token = cfg.admin_token;
  ExperimentService service(std::move(cfg));
  const int port = service.bind(o.host, o.port);
  std::cout << "serving on http://" << o.host << ":" << port << "/api/v1 (" << service.session_count()
            << " sessions restored from the log)\n";
  if (o.admin_token.empty()) std::cout << "admin token: " << token << '\n';
  std::cout << std::flush;
  g_service = &service;
  std::signal(SIGINT, stop_service);
  std::signal(SIGTERM, stop_service);
  service.run();
  g_service = nullptr;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeOpts {
  std::string log;
  std::string sheet;
  std::string out;
};

int cmd_analyze(const AnalyzeOpts& o) {
  std::vector<Session> sessions;
  if (!o.log.empty()) {
    require_file(resolve_out(o.log), "event log");
    sessions = replay_event_log(resolve_out(o.log).string());
  } else if (!o.sheet.empty()) {
    require_file(resolve_out(o.sheet), "answer sheet");
    const json j = read_json(resolve_out(o.sheet));
    for (const auto& s : j.is_array() ? j : j.at("sessions")) sessions.push_back(session_from_json(s));
  } else {
    throw ConfigError("analyze needs --log or --sheet");
  }
  SummaryTable table;
  try {
    table = summarize(sessions);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const json report = analysis_report(table);
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %6s %9s %9s %9s %9s\n", "group", "n", "opposite", "none", "correct", "z");
  std::cout << line;
  for (const auto& [name, p] : table.groups) {
    const double z = p.n ? thurstone_case_v(p.p_correct(), p.n).z : 0.0;
    std::snprintf(line, sizeof line, "%-14s %6d %9.4f %9.4f %9.4f %9.4f\n", name.c_str(), p.n, p.p_opposite(),
                  p.p_none(), p.p_correct(), z);
    std::cout << line;
  }
  if (!o.out.empty()) {
    const fs::path out = resolve_out(o.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_json(out, report);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// demo-canonical

struct DemoOpts {
  std::string out = "demo";
  double gray = 0.5;
  std::string odog_cache;
};

int cmd_demo(const DemoOpts& o, const CLI::App& sub) {
  const fs::path out = resolve_out(o.out);
  fs::create_directories(out);
  const fs::path cache = o.odog_cache.empty() ? out : resolve_out(o.odog_cache);
  const Stimulus s = canonical_contrast_stimulus(o.gray);
  const OdogVts vts(std::make_shared<const OdogModel>(OdogFilterBank::cached(OdogConfig{}, cache)));
  PqConfig pq;
  pq.kind = PqKind::lightness;
  pq.sign = PqSign::right_minus_left;
  const Image response = vts.respond(s.image);
  const double value = evaluate_pq(response, s, pq).value;

  write_png(out / "canonical_stimulus.png", s.image);
  double lo = response.data()[0], hi = lo;
  for (double v : response.data()) lo = std::min(lo, v), hi = std::max(hi, v);
  Image shown = response;
  for (double& v : shown.data()) v = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  write_png(out / "odog_response.png", shown);

  Manifest m("demo-canonical", sub);
  m.output("stimulus", out / "canonical_stimulus.png");
  m.output("response", out / "odog_response.png");
  m.j["report"] = {{"vts", "odog"},
                   {"pq_kind", "lightness"},
                   {"sign", "right_minus_left"},
                   {"layout", "left target on white, right target on black"},
                   {"target_gray", o.gray},
                   {"pq", value},
                   {"sign_ok", value > 0}};
  m.save(out);
  std::cout << "canonical stimulus: ODOG PQ (right on black minus left on white) = " << value
            << (value > 0 ? "  [positive, as perceived]" : "  [NOT positive]") << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Synthesise visual illusions with a two-discriminator GAN and run the observer study."};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML/INI file with option defaults; flags override it");

  SynthOpts synth;
  auto* s_synth = app.add_subcommand("synth-textures", "Write a synthetic texture corpus as PNG files");
  s_synth->add_option("--out", synth.out);
  s_synth->add_option("--count", synth.count)->check(CLI::PositiveNumber);
  s_synth->add_option("--size", synth.size)->check(CLI::Range(32, 4096));
  s_synth->add_option("--channels", synth.channels)->check(CLI::IsMember({1, 3}));
  s_synth->add_option("--seed", synth.seed);

  TrainVtsOpts tv;
  auto* s_tv = app.add_subcommand("train-vts", "Train RestoreNet on blur+noise restoration, or cache the ODOG bank");
  s_tv->add_option("--vts", tv.vts)->check(CLI::IsMember({"restorenet", "odog"}));
  s_tv->add_option("--out", tv.out);
  add_data_options(s_tv, tv.data);
  s_tv->add_option("--images", tv.images, "Restoration images (128x128x3 upscaled crops)")->check(CLI::Range(2, 1000000));
  s_tv->add_option("--epochs", tv.epochs)->check(CLI::PositiveNumber);
  s_tv->add_option("--batch", tv.batch)->check(CLI::PositiveNumber);
  s_tv->add_option("--lr", tv.lr)->check(CLI::PositiveNumber);
  s_tv->add_option("--blur-sigma", tv.blur_sigma)->check(CLI::NonNegativeNumber);
  s_tv->add_option("--noise-sigma", tv.noise_sigma)->check(CLI::NonNegativeNumber);
  s_tv->add_option("--seed", tv.seed);
  s_tv->add_option("--init", tv.init, "Continue from a RestoreNet checkpoint");

  PretrainOpts pt;
  auto* s_pt = app.add_subcommand("pretrain", "Adversarial pretraining of generator and background discriminator");
  s_pt->add_option("--out", pt.out);
  add_data_options(s_pt, pt.data);
  s_pt->add_option("--channels", pt.channels)->check(CLI::IsMember({1, 3}));
  s_pt->add_option("--epochs", pt.epochs)->check(CLI::PositiveNumber);
  s_pt->add_option("--max-iterations", pt.max_iterations)->check(CLI::NonNegativeNumber);
  s_pt->add_option("--batch", pt.batch)->check(CLI::Range(2, 4096));
  s_pt->add_option("--lr-g", pt.lr_g)->check(CLI::PositiveNumber);
  s_pt->add_option("--lr-d", pt.lr_d)->check(CLI::PositiveNumber);
  s_pt->add_option("--seed", pt.seed);
  s_pt->add_option("--log-every", pt.log_every);

  FinetuneOpts ft;
  bool list_presets = false;
  auto* s_ft = app.add_subcommand("finetune", "Fine-tune the generator against the illusion discriminator");
  s_ft->add_flag("--list-presets", list_presets, "Print the named recipes and exit");
  s_ft->add_option("--preset", ft.preset, "Named recipe; explicit flags override it");
  s_ft->add_option("--out", ft.out);
  s_ft->add_option("--type", ft.type)->check(CLI::IsMember({"lvi", "covi", "crvi"}));
  s_ft->add_option("--shape", ft.shape)->check(CLI::IsMember({"square", "ring", "bar", "grating"}));
  s_ft->add_option("--vts", ft.vts)->check(CLI::IsMember({"restorenet", "odog"}));
  s_ft->add_option("--vts-checkpoint", ft.vts_checkpoint);
  s_ft->add_option("--odog-cache", ft.odog_cache, "Directory holding the ODOG filter bank cache");
  s_ft->add_option("--pretrained", ft.pretrained, "Directory written by pretrain");
  s_ft->add_flag("--allow-unpretrained", ft.allow_unpretrained, "Start from a freshly initialised GAN");
  add_data_options(s_ft, ft.data);
  s_ft->add_option("--alpha", ft.alpha)->check(CLI::NonNegativeNumber);
  s_ft->add_option("--beta", ft.beta)->check(CLI::NonNegativeNumber);
  s_ft->add_option("--sign", ft.sign, "Target expected to look lighter / stronger")
      ->check(CLI::IsMember({"right", "left", "right_minus_left", "left_minus_right"}));
  s_ft->add_option("--target-value", ft.target_value, "Target intensity, one value per channel");
  s_ft->add_option("--channel-weights", ft.channel_weights, "Colour quantifier weights (+1, -1, 0)");
  s_ft->add_option("--orientation", ft.orientation)->check(CLI::IsMember({0.0, 45.0, 90.0}));
  s_ft->add_option("--target-contrast", ft.target_contrast)->check(CLI::Range(0.0, 1.0));
  s_ft->add_option("--tau", ft.tau)->check(CLI::PositiveNumber);
  s_ft->add_option("--batch", ft.batch)->check(CLI::Range(2, 4096));
  s_ft->add_option("--max-epochs", ft.max_epochs)->check(CLI::PositiveNumber);
  s_ft->add_option("--max-iterations", ft.max_iterations)->check(CLI::NonNegativeNumber);
  s_ft->add_option("--lr-g", ft.lr_g)->check(CLI::PositiveNumber);
  s_ft->add_option("--lr-d", ft.lr_d)->check(CLI::PositiveNumber);
  s_ft->add_option("--seed", ft.seed);
  s_ft->add_option("--stop-window", ft.stop_window)->check(CLI::PositiveNumber);
  s_ft->add_option("--stop-tolerance", ft.stop_tolerance)->check(CLI::NonNegativeNumber);
  s_ft->add_flag("--raw-weights", ft.raw_weights, "Use alpha and beta without normalising the terms");
  s_ft->add_option("--record-every", ft.record_every)->check(CLI::PositiveNumber);
  s_ft->add_option("--central-fraction", ft.central_fraction,
                   "Scored fraction of each target (default 1 for restorenet, 0.5 for odog)")
      ->check(CLI::Range(0.05, 1.0));
  s_ft->add_option("--export-count", ft.export_count)->check(CLI::NonNegativeNumber);
  s_ft->add_option("--pq-threshold", ft.pq_threshold);
  s_ft->add_option("--log-every", ft.log_every);

  ExportOpts ex;
  auto* s_ex = app.add_subcommand("export-candidates", "Select and export candidates from a finetune run");
  s_ex->add_option("--run", ex.run, "Directory written by finetune")->required();
  s_ex->add_option("--out", ex.out);
  s_ex->add_option("--count", ex.count)->check(CLI::PositiveNumber);
  s_ex->add_option("--pq-threshold", ex.pq_threshold);
  s_ex->add_option("--seed", ex.seed);

  ServeOpts sv;
  auto* s_sv = app.add_subcommand("serve-experiment", "Serve the forced-choice observer experiment over HTTP");
  s_sv->add_option("--candidates", sv.candidates, "Exported candidate directories")->required();
  s_sv->add_option("--log", sv.log, "Append-only event log; replayed on start");
  s_sv->add_option("--static", sv.static_dir, "Client bundle served at /");
  s_sv->add_option("--host", sv.host);
  s_sv->add_option("--port", sv.port)->check(CLI::Range(0, 65535));
  s_sv->add_option("--admin-token", sv.admin_token);
  s_sv->add_option("--seed", sv.seed);

  AnalyzeOpts an;
  auto* s_an = app.add_subcommand("analyze", "Summarise responses and scale them with Thurstone Case V");
  auto* o_log = s_an->add_option("--log", an.log, "Experiment event log");
  s_an->add_option("--sheet", an.sheet, "JSON answer sheet (array of sessions)")->excludes(o_log);
  s_an->add_option("--out", an.out, "Write the JSON report here");

  DemoOpts dm;
  auto* s_dm = app.add_subcommand("demo-canonical", "Write the simultaneous-contrast stimulus and its ODOG report");
  s_dm->add_option("--out", dm.out);
  s_dm->add_option("--gray", dm.gray)->check(CLI::Range(0.0, 1.0));
  s_dm->add_option("--odog-cache", dm.odog_cache);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*s_synth) return cmd_synth(synth, *s_synth);
    if (*s_tv) return cmd_train_vts(tv, *s_tv);
    if (*s_pt) return cmd_pretrain(pt, *s_pt);
    if (*s_ft) {
      if (list_presets) {
        for (const auto& p : finetune_presets()) {
          char line[256];
          std::snprintf(line, sizeof line, "%-26s %s (--type %s --shape %s --vts %s --dataset %s)\n", p.name.c_str(),
                        p.summary.c_str(), p.type.c_str(), p.shape.c_str(), p.vts.c_str(), p.dataset.c_str());
          std::cout << line;
        }
        return kExitOk;
      }
      return cmd_finetune(ft, *s_ft);
    }
    if (*s_ex) return cmd_export(ex, *s_ex);
    if (*s_sv) return cmd_serve(sv);
    if (*s_an) return cmd_analyze(an);
    if (*s_dm) return cmd_demo(dm, *s_dm);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitConfig;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args);
}

}  // namespace phantasmagoria
