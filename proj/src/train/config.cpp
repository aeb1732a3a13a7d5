#include "sfseg/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sfseg {

namespace pt = boost::property_tree;

void RunConfig::validate() const {
  model.validate();
  train.validate();
  prep.validate();
  if (prep.canvas != model.canvas_width || prep.canvas != model.canvas_height) {
    throw ConfigError("canvas", "prep canvas " + std::to_string(prep.canvas) + " differs from the model canvas " +
                                    std::to_string(model.canvas_width) + "x" + std::to_string(model.canvas_height));
  }
  if (!train.class_weights.weight.empty()) {
    try {
      train.class_weights.validate(static_cast<std::size_t>(model.class_count));
    } catch (const ParameterError& e) {
      throw ConfigError("class_weights", e.what());
    }
  }
}

void RunConfig::set_seed(std::uint64_t seed) {
  train.seed = seed;
  prep.seed = seed;
}

RunConfig desk_config() {
  RunConfig c;
  c.model.canvas_width = c.model.canvas_height = 96;
  c.model.width_num = 1;
  c.model.width_den = 8;
  c.train.epochs = 300;
  c.prep.canvas = 96;
  c.prep.resize_min = 72;
  c.prep.resize_max = 84;
  return c;
}

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

long long to_int(const std::string& field, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(field, "expected an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& field, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(field, "expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& field, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError(field, "expected a boolean, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunConfig parse_config(const std::string& text, RunConfig c) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("file", e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  using Setter = std::function<void(const std::string&, const std::string&)>;
  std::map<std::string, std::map<std::string, Setter>> keys;
  auto& m = keys["model"];
  m["class_count"] = [&](auto& f, auto& v) { c.model.class_count = static_cast<int>(to_int(f, v)); };
  m["canvas"] = [&](auto& f, auto& v) { c.model.canvas_width = c.model.canvas_height = static_cast<int>(to_int(f, v)); };
  m["width_multiplier"] = [&](auto& f, auto& v) {
    const auto parts = split_list(v, '/');
    if (parts.size() > 2) throw ConfigError(f, "expected N or N/D, got '" + v + "'");
    c.model.width_num = static_cast<int>(to_int(f, parts[0]));
    c.model.width_den = parts.size() == 2 ? static_cast<int>(to_int(f, parts[1])) : 1;
  };
  m["ate"] = [&](auto& f, auto& v) {
    const auto parts = split_list(v, ',');
    if (parts.size() != 3) throw ConfigError(f, "expected three flags, got '" + v + "'");
    for (std::size_t i = 0; i < 3; ++i) c.model.ate_enabled[i] = to_bool(f, parts[i]);
  };
  m["ate_placement"] = [&](auto& f, auto& v) {
    if (v == "score_branch") {
      c.model.ate_placement = AtePlacement::ScoreBranch;
    } else if (v == "trunk") {
      c.model.ate_placement = AtePlacement::Trunk;
    } else {
      throw ConfigError(f, "expected score_branch or trunk, got '" + v + "'");
    }
  };
  m["blocks"] = [&](auto& f, auto& v) {
    const auto parts = split_list(v, ',');
    if (parts.size() != 4) throw ConfigError(f, "expected four block counts, got '" + v + "'");
    for (std::size_t i = 0; i < 4; ++i) c.model.blocks[i] = static_cast<int>(to_int(f, parts[i]));
  };
  m["batchnorm"] = [&](auto& f, auto& v) { c.model.batchnorm = to_bool(f, v); };
  m["precision"] = [&](auto& f, auto& v) {
    const auto bits = to_int(f, v);
    if (bits != 32 && bits != 64) throw ConfigError(f, "expected 32 or 64");
    c.model.precision = bits == 64 ? Precision::F64 : Precision::F32;
  };

  auto& t = keys["train"];
  t["lr0"] = [&](auto& f, auto& v) { c.train.lr0 = to_double(f, v); };
  t["momentum"] = [&](auto& f, auto& v) { c.train.momentum = to_double(f, v); };
  t["decay_power"] = [&](auto& f, auto& v) { c.train.decay_power = to_double(f, v); };
  t["batch_size"] = [&](auto& f, auto& v) { c.train.batch_size = static_cast<int>(to_int(f, v)); };
  t["epochs"] = [&](auto& f, auto& v) { c.train.epochs = static_cast<int>(to_int(f, v)); };
  t["split"] = [&](auto& f, auto& v) { c.train.split = to_double(f, v); };
  t["seed"] = [&](auto& f, auto& v) { c.train.seed = static_cast<std::uint64_t>(to_int(f, v)); };
  t["class_weights"] = [&](auto& f, auto& v) {
    if (v == "ignore_background") {
      c.train.class_weights = {};
    } else if (v == "uniform") {
      c.train.class_weights = ClassWeights::uniform(static_cast<std::size_t>(c.model.class_count));
    } else {
      ClassWeights w;
      for (const auto& p : split_list(v, ',')) w.weight.push_back(to_double(f, p));
      c.train.class_weights = w;
    }
  };
  t["checkpoint_every"] = [&](auto& f, auto& v) { c.train.checkpoint_every = static_cast<int>(to_int(f, v)); };
  t["augment"] = [&](auto& f, auto& v) { c.train.augment = to_bool(f, v); };

  auto& p = keys["prep"];
  p["canvas"] = [&](auto& f, auto& v) { c.prep.canvas = static_cast<int>(to_int(f, v)); };
  p["resize_min"] = [&](auto& f, auto& v) { c.prep.resize_min = static_cast<int>(to_int(f, v)); };
  p["resize_max"] = [&](auto& f, auto& v) { c.prep.resize_max = static_cast<int>(to_int(f, v)); };
  p["background"] = [&](auto& f, auto& v) {
    const auto parts = split_list(v, ',');
    if (parts.size() != 3) throw ConfigError(f, "expected R,G,B, got '" + v + "'");
    std::array<std::uint8_t, 3> ch{};
    for (std::size_t i = 0; i < 3; ++i) {
      const auto x = to_int(f, parts[i]);
      if (x < 0 || x > 255) throw ConfigError(f, "channel out of range");
      ch[i] = static_cast<std::uint8_t>(x);
    }
    c.prep.background = {ch[0], ch[1], ch[2]};
  };
  p["seed"] = [&](auto& f, auto& v) { c.prep.seed = static_cast<std::uint64_t>(to_int(f, v)); };
  p["stroke_threshold"] = [&](auto& f, auto& v) { c.prep.stroke_threshold = static_cast<int>(to_int(f, v)); };

  // class_weights "uniform" depends on class_count; apply model first.
  for (const char* section : {"model", "train", "prep"}) {
    const auto node = tree.get_child_optional(section);
    if (!node) continue;
    for (const auto& [key, value] : *node) {
      const auto it = keys[section].find(key);
      if (it == keys[section].end()) throw ConfigError(std::string(section) + "." + key, "unknown key");
      it->second(key, value.get_value<std::string>());
    }
  }
  for (const auto& [section, node] : tree) {
    if (!keys.count(section)) throw ConfigError(section, "unknown section");
    if (node.empty() && !node.data().empty()) throw ConfigError(section, "key outside a section");
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream o;
  const auto& m = c.model;
  o << "[model]\n";
  o << "class_count = " << m.class_count << "\n";
  o << "canvas = " << m.canvas_width << "\n";
  o << "width_multiplier = " << m.width_num << "/" << m.width_den << "\n";
  o << "ate = " << m.ate_enabled[0] << "," << m.ate_enabled[1] << "," << m.ate_enabled[2] << "\n";
  o << "ate_placement = " << (m.ate_placement == AtePlacement::Trunk ? "trunk" : "score_branch") << "\n";
  o << "blocks = " << m.blocks[0] << "," << m.blocks[1] << "," << m.blocks[2] << "," << m.blocks[3] << "\n";
  o << "batchnorm = " << (m.batchnorm ? "true" : "false") << "\n";
  o << "precision = " << (m.precision == Precision::F64 ? 64 : 32) << "\n\n";

  const auto& t = c.train;
  o << "[train]\n";
  o << "lr0 = " << fmt(t.lr0) << "\n";
  o << "momentum = " << fmt(t.momentum) << "\n";
  o << "decay_power = " << fmt(t.decay_power) << "\n";
  o << "batch_size = " << t.batch_size << "\n";
  o << "epochs = " << t.epochs << "\n";
  o << "split = " << fmt(t.split) << "\n";
  o << "seed = " << t.seed << "\n";
  if (t.class_weights.weight.empty()) {
    o << "class_weights = ignore_background\n";
  } else {
    o << "class_weights = ";
    for (std::size_t i = 0; i < t.class_weights.weight.size(); ++i) o << (i ? "," : "") << fmt(t.class_weights.weight[i]);
    o << "\n";
  }
  o << "checkpoint_every = " << t.checkpoint_every << "\n";
  o << "augment = " << (t.augment ? "true" : "false") << "\n\n";

  const auto& p = c.prep;
  o << "[prep]\n";
  o << "canvas = " << p.canvas << "\n";
  o << "resize_min = " << p.resize_min << "\n";
  o << "resize_max = " << p.resize_max << "\n";
  o << "background = " << int(p.background.r) << "," << int(p.background.g) << "," << int(p.background.b) << "\n";
  o << "seed = " << p.seed << "\n";
  o << "stroke_threshold = " << p.stroke_threshold << "\n";
  return o.str();
}

}  // namespace sfseg
