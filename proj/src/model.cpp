#include "vad/model.hpp"

#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "vad/serialize.hpp"

namespace vad {

namespace {

using nlohmann::json;

json model_config_to_json(const ModelConfig& cfg) {
  return json{{"raw_channels", cfg.raw_channels},
              {"n_labels", cfg.n_labels},
              {"roi_size", cfg.roi_size},
              {"frames", cfg.frames},
              {"interact_depth", cfg.interact_depth},
              {"cycle",
               {{"n_layers", cfg.cycle.n_layers},
                {"channels", cfg.cycle.channels},
                {"attn_dim", cfg.cycle.attn_dim},
                {"p_drop", cfg.cycle.p_drop},
                {"ln_eps", cfg.cycle.ln_eps},
                {"use_local", cfg.cycle.use_local},
                {"use_global", cfg.cycle.use_global},
                {"mode", to_string(cfg.cycle.mode)}}}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.raw_channels = j.at("raw_channels").get<std::size_t>();
  cfg.n_labels = j.at("n_labels").get<std::size_t>();
  cfg.roi_size = j.at("roi_size").get<std::size_t>();
  cfg.frames = j.at("frames").get<std::size_t>();
  cfg.interact_depth = j.at("interact_depth").get<std::size_t>();
  const json& c = j.at("cycle");
  cfg.cycle.n_layers = c.at("n_layers").get<std::size_t>();
  cfg.cycle.channels = c.at("channels").get<std::size_t>();
  cfg.cycle.attn_dim = c.at("attn_dim").get<std::size_t>();
  cfg.cycle.p_drop = c.at("p_drop").get<double>();
  cfg.cycle.ln_eps = c.at("ln_eps").get<double>();
  cfg.cycle.use_local = c.at("use_local").get<bool>();
  cfg.cycle.use_global = c.at("use_global").get<bool>();
  cfg.cycle.mode = parse_interaction_mode(c.at("mode").get<std::string>());
  return cfg;
}

}  // namespace

void validate_model_config(const ModelConfig& cfg) {
  validate_cycle_config(cfg.cycle);
  if (cfg.raw_channels == 0) throw ConfigError("raw_channels must be positive");
  if (cfg.n_labels == 0) throw ConfigError("n_labels must be positive");
  if (cfg.roi_size == 0) throw ConfigError("roi_size must be positive");
  if (cfg.frames == 0) throw ConfigError("frames must be positive");
  if (cfg.interact_depth == 0) throw ConfigError("interact_depth must be positive");
}

ModelConfig model_config_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read model config " + path.string());
  json j;
  try {
    in >> j;
    return model_config_from_json(j);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  }
}

template <typename S>
HeadModel<S>::HeadModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  validate_model_config(cfg);
  const std::size_t c = cfg.cycle.channels;
  const S bound = S(1) / std::sqrt(S(cfg.raw_channels));
  reduce_w_ = uniform_init<S>({c, cfg.raw_channels}, -bound, bound, rng);
  reduce_b_ = uniform_init<S>({c}, -bound, bound, rng);
  cycle_ = init_cycle_params<S>(cfg.cycle, cfg.frames, rng);
  interact_ = init_interaction_params<S>(c, cfg.cycle.attn_dim, cfg.interact_depth, rng);
  classifier_ = init_classifier_params<S>(c, cfg.n_labels, rng);
  register_params();
}

template <typename S>
void HeadModel<S>::register_params() {
  params_.clear();
  auto reg = [&](std::string name, Tensor<S>& t) {
    params_.push_back(Parameter<S>{std::move(name), t});
  };
  auto reg_attn = [&](const std::string& prefix, AttentionParams<S>& a) {
    reg(prefix + ".w_q", a.w_q);
    reg(prefix + ".w_k", a.w_k);
    reg(prefix + ".w_v", a.w_v);
    reg(prefix + ".w_out", a.w_out);
  };
  reg("frontend.reduce_w", reduce_w_);
  reg("frontend.reduce_b", reduce_b_);
  for (std::size_t l = 0; l < cycle_.local_reorg.size(); ++l)
    reg_attn("cycle.local_reorg." + std::to_string(l), cycle_.local_reorg[l]);
  for (std::size_t l = 0; l < cycle_.local_aggr.size(); ++l)
    reg_attn("cycle.local_aggr." + std::to_string(l), cycle_.local_aggr[l]);
  for (std::size_t l = 0; l < cycle_.global_stack.size(); ++l)
    reg_attn("cycle.global_stack." + std::to_string(l), cycle_.global_stack[l]);
  reg("cycle.pos", cycle_.pos);
  reg("cycle.fuse_w", cycle_.fuse_w);
  reg("cycle.fuse_b", cycle_.fuse_b);
  for (std::size_t l = 0; l < interact_.clip_steps.size(); ++l)
    reg_attn("interact.clip." + std::to_string(l), interact_.clip_steps[l]);
  for (std::size_t l = 0; l < interact_.bank_steps.size(); ++l)
    reg_attn("interact.bank." + std::to_string(l), interact_.bank_steps[l]);
  reg("classifier.w", classifier_.w);
  reg("classifier.b", classifier_.b);
}

template <typename S>
std::size_t HeadModel<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename S>
typename HeadModel<S>::ClipResult HeadModel<S>::forward(
    const ClipData<S>& clip, const std::vector<BankEntry<S>>& bank, Rng& rng,
    bool training, CycleTrace<S>* trace) const {
  FeatureMap<S> map(clip.features);
  if (map.channels() != cfg_.raw_channels)
    throw DimensionError("clip channel count does not match the model");
  if (map.frames() != cfg_.frames)
    throw DimensionError("clip frame count does not match the model's position table");
  if (clip.boxes.size() != clip.labels.size() && !clip.labels.empty())
    throw DimensionError("clip labels/boxes mismatch");

  ClipResult out;
  for (const auto& b : clip.boxes) out.actor_ids.push_back(b.id);

  ActorFeatures<S> actors = extract_actor_features(map, clip.boxes, reduce_w_,
                                                   reduce_b_, cfg_.roi_size,
                                                   cfg_.roi_size);
  TemporalContext<S> ctx = preprocess_context(map, reduce_w_, reduce_b_);
  out.relation = cycle_forward(actors, ctx, cfg_.cycle, cycle_, rng, training, trace,
                               std::span<const int>(out.actor_ids));
  const S eps = static_cast<S>(cfg_.cycle.ln_eps);
  out.features = instance_interact(out.relation.enhanced, bank, interact_, eps,
                                   cfg_.cycle.p_drop, rng, training);
  out.probs = classify(out.features, classifier_);
  return out;
}

template <typename S>
void HeadModel<S>::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.json");
    if (!out) throw FormatError("cannot write model config in " + dir.string());
    out << model_config_to_json(cfg_).dump(2) << "\n";
  }
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw FormatError("cannot write model parameters in " + dir.string());
  for (const auto& p : params_) write_named_tensor(bin, p.name, p.tensor);
  if (!bin) throw FormatError("failed writing model parameters in " + dir.string());
}

template <typename S>
HeadModel<S> HeadModel<S>::load(const std::filesystem::path& dir) {
  ModelConfig cfg = model_config_from_json_file(dir / "config.json");
  Rng scratch(0);
  HeadModel<S> model(cfg, scratch);

  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw FormatError("cannot read model parameters in " + dir.string());
  std::map<std::string, Tensor<S>> stored;
  while (bin.peek() != std::ifstream::traits_type::eof()) {
    auto [name, tensor] = read_named_tensor<S>(bin);
    if (!stored.emplace(name, tensor).second)
      throw FormatError("duplicate parameter record: " + name);
  }
  if (stored.size() != model.params_.size())
    throw FormatError("parameter file does not match the model architecture");
  for (auto& p : model.params_) {
    auto it = stored.find(p.name);
    if (it == stored.end()) throw FormatError("missing parameter record: " + p.name);
    if (it->second.shape() != p.tensor.shape())
      throw FormatError("parameter shape mismatch for " + p.name);
    auto dst = p.tensor.mutable_data();
    auto src = it->second.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return model;
}

template class HeadModel<float>;
template class HeadModel<double>;

}  // namespace vad
