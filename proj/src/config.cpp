#include "gdas/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace gdas {

namespace {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key), "has the wrong type");
    }
  }

  void get_size(const char* key, std::size_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw ConfigError(field(key), "must be a non-negative integer");
    }
    out = v.get<std::size_t>();
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader child(const char* key, bool required = false) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      if (required) throw ConfigError(field(key), "is required");
      static const json empty = json::object();
      return Reader(empty, field(key));
    }
    return Reader(j_.at(key), field(key));
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(field(key.c_str()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(Reader r, TrainConfig& t) {
  r.get_size("epochs", t.epochs);
  r.get_size("batch_size", t.batch_size);
  r.get("lr_max", t.lr_max);
  r.get("lr_min", t.lr_min);
  r.get("momentum", t.momentum);
  r.get("weight_decay", t.weight_decay);
  r.get("seed", t.seed);
  r.finish();
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},     {"batch_size", t.batch_size}, {"lr_max", t.lr_max},
          {"lr_min", t.lr_min},     {"momentum", t.momentum},     {"weight_decay", t.weight_decay},
          {"seed", t.seed}};
}

void check_train(const TrainConfig& t, const std::string& path) {
  if (t.epochs == 0) throw ConfigError(path + ".epochs", "must be >= 1");
  if (t.batch_size == 0) throw ConfigError(path + ".batch_size", "must be >= 1");
  if (!(t.lr_max > 0.0)) throw ConfigError(path + ".lr_max", "must be positive");
  if (!(t.lr_min > 0.0)) throw ConfigError(path + ".lr_min", "must be positive");
  if (!(t.momentum >= 0.0 && t.momentum < 1.0)) throw ConfigError(path + ".momentum", "must lie in [0, 1)");
  if (t.weight_decay < 0.0) throw ConfigError(path + ".weight_decay", "must be >= 0");
}

}  // namespace

SearchSpaceSpec desk_scale_space() {
  SearchSpaceSpec s;
  s.nodes = 2;
  s.retained = 2;
  s.candidates = {OpKind::identity, OpKind::zeroize, OpKind::sep_conv_3x3, OpKind::max_pool_3x3};
  return s;
}

void set_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.dataset.seed = seed;
  c.search.seed = seed;
  c.train.seed = seed;
  c.oracle.train.seed = seed;
}

void RunConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  const auto& d = dataset;
  if (d.synthetic.size < 2) throw ConfigError("dataset.size", "must be >= 2");
  if (d.synthetic.image_size < 3) throw ConfigError("dataset.image_size", "must be >= 3");
  if (d.synthetic.num_classes < 2 || d.synthetic.num_classes > 4) {
    throw ConfigError("dataset.num_classes", "must lie in 2..4");
  }
  if (d.synthetic.segment_length == 0 || d.synthetic.segment_length > d.synthetic.image_size) {
    throw ConfigError("dataset.segment_length", "must lie in 1..image_size");
  }
  if (!(d.synthetic.noise >= 0.0)) throw ConfigError("dataset.noise", "must be >= 0");
  if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0)) {
    throw ConfigError("dataset.train_fraction", "must lie in (0, 1)");
  }
  try {
    search_space.validate();
    count_subgraphs(search_space);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError("search_space", ex.what());
  } catch (const std::overflow_error&) {
    // Huge spaces are fine for search; only enumeration is capped.
  }
  {
    const auto& cands = search_space.candidates;
    const bool has_identity = search_space.candidate_index(OpKind::identity).has_value();
    const bool has_zeroize = search_space.candidate_index(OpKind::zeroize).has_value();
    const bool has_parametric = std::any_of(cands.begin(), cands.end(), is_parametric);
    if (!has_identity || !has_zeroize || !has_parametric) {
      throw ConfigError("search_space.candidates",
                        "must include identity, zeroize and at least one parametric op");
    }
  }
  try {
    network.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError("network", ex.what());
  }
  if (network.num_classes != d.synthetic.num_classes) {
    throw ConfigError("network.num_classes", "must equal dataset.num_classes");
  }
  try {
    search.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError("search", ex.what());
  }
  check_train(train, "train");
  check_train(oracle.train, "oracle");
  if (oracle.workers == 0) throw ConfigError("oracle.workers", "must be >= 1");
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  Reader root(j, "");
  if (!j.is_object() || !j.contains("dataset")) throw ConfigError("dataset", "is required");
  root.get("seed", c.seed);
  set_seed(c, c.seed);
  root.get("output_dir", c.output_dir);
  root.get("exclude_zeroize", c.exclude_zeroize);

  {
    auto r = root.child("dataset", true);
    std::string kind = "oriented_edges";
    r.get("kind", kind);
    if (kind != "oriented_edges") throw ConfigError("dataset.kind", "only 'oriented_edges' is supported");
    r.get_size("size", c.dataset.synthetic.size);
    r.get_size("image_size", c.dataset.synthetic.image_size);
    r.get_size("num_classes", c.dataset.synthetic.num_classes);
    r.get("noise", c.dataset.synthetic.noise);
    r.get_size("segments", c.dataset.synthetic.segments);
    r.get_size("segment_length", c.dataset.synthetic.segment_length);
    r.get("seed", c.dataset.seed);
    r.get("train_fraction", c.dataset.train_fraction);
    r.finish();
  }
  c.network.num_classes = c.dataset.synthetic.num_classes;
  {
    auto r = root.child("search_space");
    r.get_size("B", c.search_space.nodes);
    r.get_size("T", c.search_space.retained);
    if (r.has("candidates")) {
      const auto& arr = r.raw("candidates");
      if (!arr.is_array()) throw ConfigError("search_space.candidates", "must be an array of names");
      c.search_space.candidates.clear();
      for (const auto& name : arr) {
        const auto op = name.is_string() ? parse_op(name.get<std::string>()) : std::nullopt;
        if (!op) throw ConfigError("search_space.candidates", "unknown op " + name.dump());
        c.search_space.candidates.push_back(*op);
      }
    }
    r.finish();
  }
  {
    auto r = root.child("network");
    r.get_size("C", c.network.C);
    r.get_size("N", c.network.N);
    r.get_size("num_classes", c.network.num_classes);
    r.finish();
  }
  {
    auto r = root.child("search");
    auto& s = c.search;
    r.get_size("epochs", s.epochs);
    r.get_size("batch_size", s.batch_size);
    r.get("w_lr_max", s.w_lr_max);
    r.get("w_lr_min", s.w_lr_min);
    r.get("w_momentum", s.w_momentum);
    r.get("w_weight_decay", s.w_weight_decay);
    r.get("a_lr", s.a_lr);
    r.get("a_weight_decay", s.a_weight_decay);
    r.get("a_beta1", s.a_beta1);
    r.get("a_beta2", s.a_beta2);
    r.get("tau_start", s.tau_start);
    r.get("tau_end", s.tau_end);
    r.get("seed", s.seed);
    std::string mode(selection_mode_name(s.mode));
    r.get("mode", mode);
    try {
      s.mode = parse_selection_mode(mode);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError("search.mode", ex.what());
    }
    r.get("accelerated", s.accelerated);
    r.get("fixed_reduction_cell", s.fixed_reduction_cell);
    r.finish();
  }
  read_train(root.child("train"), c.train);
  {
    auto r = root.child("oracle");
    auto& t = c.oracle.train;
    r.get_size("epochs", t.epochs);
    r.get_size("batch_size", t.batch_size);
    r.get("lr_max", t.lr_max);
    r.get("lr_min", t.lr_min);
    r.get("momentum", t.momentum);
    r.get("weight_decay", t.weight_decay);
    r.get("seed", t.seed);
    r.get_size("workers", c.oracle.workers);
    r.get("cap", c.oracle.cap);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
  json cands = json::array();
  for (auto op : c.search_space.candidates) cands.push_back(std::string(op_name(op)));
  const auto& s = c.search;
  json oracle = train_json(c.oracle.train);
  oracle["workers"] = c.oracle.workers;
  oracle["cap"] = c.oracle.cap;
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"exclude_zeroize", c.exclude_zeroize},
      {"dataset",
       {{"kind", "oriented_edges"},
        {"size", c.dataset.synthetic.size},
        {"image_size", c.dataset.synthetic.image_size},
        {"num_classes", c.dataset.synthetic.num_classes},
        {"noise", c.dataset.synthetic.noise},
        {"segments", c.dataset.synthetic.segments},
        {"segment_length", c.dataset.synthetic.segment_length},
        {"seed", c.dataset.seed},
        {"train_fraction", c.dataset.train_fraction}}},
      {"search_space", {{"B", c.search_space.nodes}, {"T", c.search_space.retained}, {"candidates", cands}}},
      {"network", {{"C", c.network.C}, {"N", c.network.N}, {"num_classes", c.network.num_classes}}},
      {"search",
       {{"epochs", s.epochs},
        {"batch_size", s.batch_size},
        {"w_lr_max", s.w_lr_max},
        {"w_lr_min", s.w_lr_min},
        {"w_momentum", s.w_momentum},
        {"w_weight_decay", s.w_weight_decay},
        {"a_lr", s.a_lr},
        {"a_weight_decay", s.a_weight_decay},
        {"a_beta1", s.a_beta1},
        {"a_beta2", s.a_beta2},
        {"tau_start", s.tau_start},
        {"tau_end", s.tau_end},
        {"seed", s.seed},
        {"mode", std::string(selection_mode_name(s.mode))},
        {"accelerated", s.accelerated},
        {"fixed_reduction_cell", s.fixed_reduction_cell}}},
      {"train", train_json(c.train)},
      {"oracle", oracle},
  };
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw ConfigError("config", std::string("not valid JSON: ") + ex.what());
  }
  return config_from_json(j);
}

}  // namespace gdas
