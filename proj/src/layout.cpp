#include "ipcir/layout.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace ipcir::layout {

using nlohmann::json;

namespace {

std::string describe(const std::vector<Violation>& vs) {
  std::string msg = std::to_string(vs.size()) + " layout violation(s):";
  for (const auto& v : vs) {
    msg += " [";
    msg += v.instance < 0 ? std::string("layout") : "instance " + std::to_string(v.instance);
    msg += ": " + v.rule + "]";
  }
  return msg;
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

double clamp_coordinate(double v) {
  if (v >= -kClampSlack && v < 0.0) return 0.0;
  if (v > 1.0 && v <= 1.0 + kClampSlack) return 1.0;
  return v;
}

bool modality_from_string(std::string_view s, Modality& out) {
  for (auto m : {Modality::text, Modality::image, Modality::image_and_text}) {
    if (to_string(m) == s) {
      out = m;
      return true;
    }
  }
  return false;
}

}  // namespace

LayoutValidationError::LayoutValidationError(std::vector<Violation> violations)
    : Error(ErrorKind::validation, "layout", describe(violations)),
      violations_(std::move(violations)) {}

LayoutParseError::LayoutParseError(std::size_t byte, const std::string& what)
    : Error(ErrorKind::format, "layout",
            "layout document does not parse at byte " + std::to_string(byte) + ": " + what),
      byte_(byte) {}

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::image: return "image";
    case Modality::image_and_text: return "image_and_text";
  }
  return "text";
}

std::string build_prompt(const std::vector<std::string>& query_captions,
                         std::string_view relative_caption) {
  if (query_captions.empty()) throw Error(ErrorKind::argument, "layout", "no query caption given");
  if (relative_caption.empty()) throw Error(ErrorKind::argument, "layout", "empty relative caption");
  std::string joined;
  for (std::size_t i = 0; i < query_captions.size(); ++i) {
    if (query_captions[i].empty()) {
      throw Error(ErrorKind::argument, "layout", "query caption " + std::to_string(i) + " is empty");
    }
    if (i) joined += "; ";
    joined += query_captions[i];
  }
  return "Given an image of " + joined + ", we show " + std::string(relative_caption);
}

std::vector<Violation> validate_layout(const ProxyLayout& layout) {
  std::vector<Violation> out;
  if (layout.scene.empty()) out.push_back({-1, std::string(rule::scene_non_empty)});
  if (layout.instances.empty()) out.push_back({-1, std::string(rule::has_instances)});
  for (std::size_t i = 0; i < layout.instances.size(); ++i) {
    const auto& inst = layout.instances[i];
    const int idx = static_cast<int>(i);
    if (inst.description.empty()) out.push_back({idx, std::string(rule::description_non_empty)});
    const auto& b = inst.bbox;
    if (!std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) || !std::isfinite(b.y2)) {
      out.push_back({idx, std::string(rule::bbox_finite)});
      continue;
    }
    if (!(b.x1 < b.x2)) out.push_back({idx, std::string(rule::x_order)});
    if (!(b.y1 < b.y2)) out.push_back({idx, std::string(rule::y_order)});
    if (!in_unit(b.x1) || !in_unit(b.x2)) out.push_back({idx, std::string(rule::x_range)});
    if (!in_unit(b.y1) || !in_unit(b.y2)) out.push_back({idx, std::string(rule::y_range)});
  }
  return out;
}

ProxyLayout parse_layout(std::string_view raw) {
  json doc;
  try {
    doc = json::parse(raw.begin(), raw.end());
  } catch (const json::parse_error& e) {
    throw LayoutParseError(e.byte, e.what());
  }

  std::vector<Violation> structural;
  ProxyLayout out;
  if (!doc.is_object()) throw LayoutValidationError({{-1, std::string(rule::root_object)}});

  if (!doc.contains("scene") || !doc["scene"].is_string()) {
    structural.push_back({-1, std::string(rule::scene_type)});
  } else {
    out.scene = doc["scene"].get<std::string>();
  }

  if (!doc.contains("instances") || !doc["instances"].is_array()) {
    structural.push_back({-1, std::string(rule::instances_type)});
  } else {
    int idx = 0;
    for (const auto& item : doc["instances"]) {
      LayoutInstance inst;
      if (!item.is_object()) {
        structural.push_back({idx, std::string(rule::instance_object)});
        out.instances.push_back(inst);
        ++idx;
        continue;
      }
      if (!item.contains("desc") || !item["desc"].is_string()) {
        structural.push_back({idx, std::string(rule::description_type)});
      } else {
        inst.description = item["desc"].get<std::string>();
      }
      const json* bbox = item.contains("bbox") ? &item["bbox"] : nullptr;
      if (!bbox || !bbox->is_array() || bbox->size() != 4 ||
          !std::all_of(bbox->begin(), bbox->end(), [](const json& v) { return v.is_number(); })) {
        structural.push_back({idx, std::string(rule::bbox_shape)});
      } else {
        inst.bbox = {clamp_coordinate((*bbox)[0].get<double>()), clamp_coordinate((*bbox)[1].get<double>()),
                     clamp_coordinate((*bbox)[2].get<double>()), clamp_coordinate((*bbox)[3].get<double>())};
      }
      if (!item.contains("modality") || !item["modality"].is_string() ||
          !modality_from_string(item["modality"].get<std::string>(), inst.modality)) {
        structural.push_back({idx, std::string(rule::modality_value)});
      }
      out.instances.push_back(std::move(inst));
      ++idx;
    }
  }

  auto semantic = validate_layout(out);
  // Instances whose structure is broken would produce follow-on noise; keep
  // only the semantic findings that are not already explained structurally.
  std::vector<Violation> all = structural;
  for (auto& v : semantic) {
    const bool explained = std::any_of(structural.begin(), structural.end(), [&](const Violation& s) {
      if (s.instance != v.instance) return false;
      if (s.rule == rule::scene_type) return v.rule == rule::scene_non_empty;
      if (s.rule == rule::instances_type) return v.rule == rule::has_instances;
      if (s.rule == rule::instance_object) return true;
      if (s.rule == rule::description_type) return v.rule == rule::description_non_empty;
      return false;
    });
    if (!explained) all.push_back(std::move(v));
  }
  if (!all.empty()) throw LayoutValidationError(std::move(all));
  return out;
}

std::string serialize_layout(const ProxyLayout& layout) {
  json doc;
  doc["scene"] = layout.scene;
  json instances = json::array();
  for (const auto& inst : layout.instances) {
    instances.push_back({{"desc", inst.description},
                         {"bbox", {inst.bbox.x1, inst.bbox.y1, inst.bbox.x2, inst.bbox.y2}},
                         {"modality", std::string(to_string(inst.modality))}});
  }
  doc["instances"] = std::move(instances);
  return doc.dump(2);
}

ProxyLayout duplicate_image_instances(const ProxyLayout& layout) {
  ProxyLayout out{layout.scene, {}};
  out.instances.reserve(layout.instances.size() * 2);
  for (const auto& inst : layout.instances) {
    out.instances.push_back(inst);
    if (inst.modality == Modality::image) {
      LayoutInstance copy = inst;
      copy.modality = Modality::image_and_text;
      out.instances.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace ipcir::layout
