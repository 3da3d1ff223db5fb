#include "prosdd/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace prosdd {

using nlohmann::json;

namespace {

json attacks_to_json(const std::vector<AttackFamily>& v) {
  json a = json::array();
  for (auto f : v) a.push_back(to_string(f));
  return a;
}

std::vector<AttackFamily> attacks_from_json(const json& a) {
  std::vector<AttackFamily> v;
  for (const auto& s : a) {
    const std::string name = s.get<std::string>();
    // accept single-letter shorthand
    if (name == "A") v.push_back(AttackFamily::A_flat_pitch);
    else if (name == "B") v.push_back(AttackFamily::B_pitch_discontinuity);
    else if (name == "C") v.push_back(AttackFamily::C_cross_speaker_prosody);
    else if (name == "D") v.push_back(AttackFamily::D_unnatural_expressive);
    else v.push_back(attack_from_string(name));
  }
  return v;
}

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw DataError("unknown config key: " + (section.empty() ? key : section + "." + key));
    }
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig RunConfig::to_train_config() const {
  TrainConfig t;
  t.model = model;
  t.opt = opt;
  t.masking = masking;
  t.objective = objective;
  t.weights = weights;
  t.mask_fraction_stage1 = mask_fraction_stage1;
  t.mask_fraction_stage2 = mask_fraction_stage2;
  t.init_seed = init_seed;
  return t;
}

RunConfig default_run_config() { return RunConfig{}; }

RunConfig desk_run_config() {
  RunConfig cfg;
  cfg.opt.epochs_stage1 = 6;
  cfg.opt.epochs_stage2 = 8;
  cfg.opt.batch_size = 16;
  cfg.opt.global_lr_multiplier = 1000.0;
  return cfg;
}

static json to_json(const RunConfig& cfg) {
  json j;
  j["corpus"] = {{"speakers", cfg.corpus.n_speakers},
                 {"utts_per_speaker", cfg.corpus.utts_per_speaker},
                 {"stage1_bona", cfg.corpus.stage1_bona},
                 {"stage2_train_bona", cfg.corpus.stage2_train_bona},
                 {"stage2_train_spoof", cfg.corpus.stage2_train_spoof},
                 {"stage2_dev_bona", cfg.corpus.stage2_dev_bona},
                 {"stage2_dev_spoof", cfg.corpus.stage2_dev_spoof},
                 {"eval_seen_bona", cfg.corpus.eval_seen_bona},
                 {"eval_seen_spoof", cfg.corpus.eval_seen_spoof},
                 {"shift_bona", cfg.corpus.shift_bona},
                 {"shift_spoof", cfg.corpus.shift_spoof},
                 {"train_attacks", attacks_to_json(cfg.corpus.train_attacks)},
                 {"shift_attacks", attacks_to_json(cfg.corpus.shift_attacks)}};
  j["model"] = {{"hidden_dim", cfg.model.hidden_dim},
                {"n_layers", cfg.model.n_layers},
                {"n_heads", cfg.model.n_heads},
                {"ffn_dim", cfg.model.ffn_dim},
                {"conv_strides", cfg.model.conv_strides},
                {"dropout_rate", cfg.model.dropout_rate}};
  j["optimizer"] = {{"base_lr", cfg.opt.base_lr},
                    {"ratio_backbone", cfg.opt.ratio_backbone},
                    {"ratio_projection", cfg.opt.ratio_projection},
                    {"ratio_classifier", cfg.opt.ratio_classifier},
                    {"global_lr_multiplier", cfg.opt.global_lr_multiplier},
                    {"weight_decay", cfg.opt.weight_decay},
                    {"max_grad_norm", cfg.opt.max_grad_norm},
                    {"epochs_stage1", cfg.opt.epochs_stage1},
                    {"epochs_stage2", cfg.opt.epochs_stage2},
                    {"batch_size", cfg.opt.batch_size}};
  j["masking"] = {{"span_length", cfg.masking.span_length},
                  {"probability_is_fraction", cfg.masking.probability_is_fraction},
                  {"fraction_stage1", cfg.mask_fraction_stage1},
                  {"fraction_stage2", cfg.mask_fraction_stage2}};
  j["objective"] = {{"K", cfg.objective.K},
                    {"tau_stage1", cfg.objective.tau_stage1},
                    {"tau_stage2", cfg.objective.tau_stage2},
                    {"ssl_on_bonafide_only", cfg.objective.ssl_on_bonafide_only}};
  j["weights"] = {{"alpha", cfg.weights.alpha},
                  {"beta_early", cfg.weights.beta_early},
                  {"beta_late", cfg.weights.beta_late},
                  {"beta_switch_epoch", cfg.weights.beta_switch_epoch}};
  j["prosody"] = {{"voicing_threshold", cfg.prosody.voicing_threshold},
                  {"rms_gate", cfg.prosody.rms_gate}};
  j["speaker"] = {{"expansion_seed", cfg.speaker.expansion_seed}};
  j["seeds"] = {{"corpus", cfg.corpus_seed}, {"train", cfg.train_seed}, {"init", cfg.init_seed}};
  j["augmentation"] = cfg.augmentation;
  return j;
}

static RunConfig from_json(const json& j) {
  RunConfig cfg = desk_run_config();
  check_keys(j, "", {"corpus", "model", "optimizer", "masking", "objective", "weights", "prosody",
                     "speaker", "seeds", "augmentation"});
  get_if(j, "augmentation", cfg.augmentation);
  if (cfg.augmentation != "none") {
    throw DataError("augmentation '" + cfg.augmentation + "' not implemented (only \"none\")");
  }
  if (j.contains("corpus")) {
    const auto& c = j.at("corpus");
    check_keys(c, "corpus",
               {"speakers", "utts_per_speaker", "stage1_bona", "stage2_train_bona",
                "stage2_train_spoof", "stage2_dev_bona", "stage2_dev_spoof", "eval_seen_bona",
                "eval_seen_spoof", "shift_bona", "shift_spoof", "train_attacks", "shift_attacks"});
    get_if(c, "speakers", cfg.corpus.n_speakers);
    get_if(c, "utts_per_speaker", cfg.corpus.utts_per_speaker);
    get_if(c, "stage1_bona", cfg.corpus.stage1_bona);
    get_if(c, "stage2_train_bona", cfg.corpus.stage2_train_bona);
    get_if(c, "stage2_train_spoof", cfg.corpus.stage2_train_spoof);
    get_if(c, "stage2_dev_bona", cfg.corpus.stage2_dev_bona);
    get_if(c, "stage2_dev_spoof", cfg.corpus.stage2_dev_spoof);
    get_if(c, "eval_seen_bona", cfg.corpus.eval_seen_bona);
    get_if(c, "eval_seen_spoof", cfg.corpus.eval_seen_spoof);
    get_if(c, "shift_bona", cfg.corpus.shift_bona);
    get_if(c, "shift_spoof", cfg.corpus.shift_spoof);
    if (c.contains("train_attacks")) cfg.corpus.train_attacks = attacks_from_json(c.at("train_attacks"));
    if (c.contains("shift_attacks")) cfg.corpus.shift_attacks = attacks_from_json(c.at("shift_attacks"));
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, "model",
               {"hidden_dim", "n_layers", "n_heads", "ffn_dim", "conv_strides", "dropout_rate"});
    get_if(m, "hidden_dim", cfg.model.hidden_dim);
    get_if(m, "n_layers", cfg.model.n_layers);
    get_if(m, "n_heads", cfg.model.n_heads);
    get_if(m, "ffn_dim", cfg.model.ffn_dim);
    get_if(m, "conv_strides", cfg.model.conv_strides);
    get_if(m, "dropout_rate", cfg.model.dropout_rate);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, "optimizer",
               {"base_lr", "ratio_backbone", "ratio_projection", "ratio_classifier",
                "global_lr_multiplier", "weight_decay", "max_grad_norm", "epochs_stage1",
                "epochs_stage2", "batch_size"});
    get_if(o, "base_lr", cfg.opt.base_lr);
    get_if(o, "ratio_backbone", cfg.opt.ratio_backbone);
    get_if(o, "ratio_projection", cfg.opt.ratio_projection);
    get_if(o, "ratio_classifier", cfg.opt.ratio_classifier);
    get_if(o, "global_lr_multiplier", cfg.opt.global_lr_multiplier);
    get_if(o, "weight_decay", cfg.opt.weight_decay);
    get_if(o, "max_grad_norm", cfg.opt.max_grad_norm);
    get_if(o, "epochs_stage1", cfg.opt.epochs_stage1);
    get_if(o, "epochs_stage2", cfg.opt.epochs_stage2);
    get_if(o, "batch_size", cfg.opt.batch_size);
  }
  if (j.contains("masking")) {
    const auto& m = j.at("masking");
    check_keys(m, "masking",
               {"span_length", "probability_is_fraction", "fraction_stage1", "fraction_stage2"});
    get_if(m, "span_length", cfg.masking.span_length);
    get_if(m, "probability_is_fraction", cfg.masking.probability_is_fraction);
    get_if(m, "fraction_stage1", cfg.mask_fraction_stage1);
    get_if(m, "fraction_stage2", cfg.mask_fraction_stage2);
  }
  if (j.contains("objective")) {
    const auto& o = j.at("objective");
    check_keys(o, "objective", {"K", "tau_stage1", "tau_stage2", "ssl_on_bonafide_only"});
    get_if(o, "K", cfg.objective.K);
    get_if(o, "tau_stage1", cfg.objective.tau_stage1);
    get_if(o, "tau_stage2", cfg.objective.tau_stage2);
    get_if(o, "ssl_on_bonafide_only", cfg.objective.ssl_on_bonafide_only);
  }
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    check_keys(w, "weights", {"alpha", "beta_early", "beta_late", "beta_switch_epoch"});
    get_if(w, "alpha", cfg.weights.alpha);
    get_if(w, "beta_early", cfg.weights.beta_early);
    get_if(w, "beta_late", cfg.weights.beta_late);
    get_if(w, "beta_switch_epoch", cfg.weights.beta_switch_epoch);
  }
  if (j.contains("prosody")) {
    const auto& p = j.at("prosody");
    check_keys(p, "prosody", {"voicing_threshold", "rms_gate"});
    get_if(p, "voicing_threshold", cfg.prosody.voicing_threshold);
    get_if(p, "rms_gate", cfg.prosody.rms_gate);
  }
  if (j.contains("speaker")) {
    const auto& s = j.at("speaker");
    check_keys(s, "speaker", {"expansion_seed"});
    get_if(s, "expansion_seed", cfg.speaker.expansion_seed);
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    check_keys(s, "seeds", {"corpus", "train", "init"});
    get_if(s, "corpus", cfg.corpus_seed);
    get_if(s, "train", cfg.train_seed);
    get_if(s, "init", cfg.init_seed);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read config: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw DataError("config parse error in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write config: " + path.string());
  f << to_json(cfg).dump(2) << '\n';
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  json j = to_json(cfg);
  std::string pointer = "/" + key;
  for (auto& ch : pointer) {
    if (ch == '.') ch = '/';
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }
  try {
    j[json::json_pointer(pointer)] = parsed;
  } catch (const json::exception& e) {
    throw DataError("bad override key '" + key + "': " + e.what());
  }
  cfg = from_json(j);
}

}  // namespace prosdd
