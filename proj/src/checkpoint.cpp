#include "relaxeq/checkpoint.hpp"

#include <fstream>

namespace relaxeq {

namespace {

using nlohmann::json;

json shape_json(const Tensor& t) { return t.shape(); }

void fill(const json& j, const char* key, Tensor& t, std::size_t layer) {
  const std::string where = "checkpoint layer " + std::to_string(layer) + " '" + key + "'";
  if (!j.contains(key) || !j.at(key).is_array()) throw ConfigError(where + ": missing");
  const auto values = j.at(key).get<std::vector<double>>();
  if (values.size() != t.size()) {
    throw ConfigError(where + ": expected " + std::to_string(t.size()) + " values, got " + std::to_string(values.size()));
  }
  t.values() = values;
}

}  // namespace

json checkpoint_to_json(const Model& model, const RunConfig& config) {
  json layers = json::array();
  for (const Layer& layer : model.layers) {
    json l;
    l["kind"] = layer_kind(layer);
    if (const auto* p = std::get_if<RelaxedLinear>(&layer)) {
      l["shape"] = {p->rep_out.dim(), p->rep_in.dim()};
      l["rep_in"] = p->rep_in.name();
      l["rep_out"] = p->rep_out.name();
      l["coeffs"] = p->coeffs.values();
      if (p->W) l["W"] = p->W->values();
    } else if (const auto* p = std::get_if<VNRelaxedLinear>(&layer)) {
      l["shape"] = shape_json(p->W_e);
      l["W_e"] = p->W_e.values();
      if (p->W) l["W"] = p->W->values();
    } else if (const auto* p = std::get_if<GatedNorm>(&layer)) {
      l["shape"] = shape_json(p->w);
      l["rep"] = p->rep.name();
      l["w"] = p->w.values();
      l["b"] = p->b.values();
    } else if (const auto* p = std::get_if<InvariantHead>(&layer)) {
      l["shape"] = shape_json(p->weight);
      l["rep"] = p->rep.name();
      l["weight"] = p->weight.values();
      l["bias"] = p->bias.values();
    }
    layers.push_back(std::move(l));
  }
  return json{{"schema", kCheckpointSchema}, {"config", to_json(config)}, {"theta", model.theta}, {"layers", std::move(layers)}};
}

void load_checkpoint(const json& ck, Model& model) {
  if (!ck.is_object() || ck.value("schema", 0) != kCheckpointSchema) throw ConfigError("checkpoint: unsupported schema");
  if (!ck.contains("layers") || !ck.at("layers").is_array()) throw ConfigError("checkpoint: missing layers");
  const json& layers = ck.at("layers");
  if (layers.size() != model.layers.size()) {
    throw ConfigError("checkpoint has " + std::to_string(layers.size()) + " layers, configuration builds " +
                      std::to_string(model.layers.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& l = layers[i];
    Layer& layer = model.layers[i];
    if (l.value("kind", "") != layer_kind(layer)) {
      throw ConfigError("checkpoint layer " + std::to_string(i) + ": kind '" + l.value("kind", "") + "' but configuration builds '" +
                        layer_kind(layer) + "'");
    }
    if (auto* p = std::get_if<RelaxedLinear>(&layer)) {
      if (l.value("rep_in", "") != p->rep_in.name() || l.value("rep_out", "") != p->rep_out.name()) {
        throw ConfigError("checkpoint layer " + std::to_string(i) + ": representation mismatch");
      }
      fill(l, "coeffs", p->coeffs, i);
      if (l.contains("W")) {
        if (!p->W) p->W = Tensor(Shape{static_cast<std::size_t>(p->rep_out.dim()), static_cast<std::size_t>(p->rep_in.dim())});
        fill(l, "W", *p->W, i);
      } else {
        p->W.reset();
      }
    } else if (auto* p = std::get_if<VNRelaxedLinear>(&layer)) {
      fill(l, "W_e", p->W_e, i);
      if (l.contains("W")) {
        if (!p->W) p->W = Tensor(Shape{3 * p->c_out, 3 * p->c_in});
        fill(l, "W", *p->W, i);
      } else {
        p->W.reset();
      }
    } else if (auto* p = std::get_if<GatedNorm>(&layer)) {
      if (l.value("rep", "") != p->rep.name()) throw ConfigError("checkpoint layer " + std::to_string(i) + ": representation mismatch");
      fill(l, "w", p->w, i);
      fill(l, "b", p->b, i);
    } else if (auto* p = std::get_if<InvariantHead>(&layer)) {
      if (l.value("rep", "") != p->rep.name()) throw ConfigError("checkpoint layer " + std::to_string(i) + ": representation mismatch");
      fill(l, "weight", p->weight, i);
      fill(l, "bias", p->bias, i);
    }
  }
  if (!ck.contains("theta") || !ck.at("theta").is_number() || ck.at("theta").get<double>() < 0.0) {
    throw ConfigError("checkpoint: missing or negative theta");
  }
  model.theta = ck.at("theta").get<double>();
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

}  // namespace relaxeq
