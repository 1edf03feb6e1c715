#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "ipcir/error.hpp"

namespace ipcir::layout {

enum class Modality { text, image, image_and_text };

std::string_view to_string(Modality m);

/// Normalized [0,1] box, origin top-left.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 1, y2 = 1;
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct LayoutInstance {
  std::string description;
  BBox bbox;
  Modality modality = Modality::text;
  friend bool operator==(const LayoutInstance&, const LayoutInstance&) = default;
};

struct ProxyLayout {
  std::string scene;
  std::vector<LayoutInstance> instances;
  friend bool operator==(const ProxyLayout&, const ProxyLayout&) = default;
};

/// One broken rule. `instance` is -1 for layout-level rules.
struct Violation {
  int instance = -1;
  std::string rule;
  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Rule names reported by validate_layout / parse_layout.
namespace rule {
inline constexpr std::string_view scene_non_empty = "scene_non_empty";
inline constexpr std::string_view has_instances = "at_least_one_instance";
inline constexpr std::string_view description_non_empty = "description_non_empty";
inline constexpr std::string_view bbox_finite = "bbox_finite";
inline constexpr std::string_view x_order = "x1<x2";
inline constexpr std::string_view y_order = "y1<y2";
inline constexpr std::string_view x_range = "0<=x1,x2<=1";
inline constexpr std::string_view y_range = "0<=y1,y2<=1";
// Structural rules, only produced while parsing a document.
inline constexpr std::string_view root_object = "root_object";
inline constexpr std::string_view scene_type = "scene_string";
inline constexpr std::string_view instances_type = "instances_array";
inline constexpr std::string_view instance_object = "instance_object";
inline constexpr std::string_view description_type = "desc_string";
inline constexpr std::string_view bbox_shape = "bbox_4_numbers";
inline constexpr std::string_view modality_value = "modality_enum";
}  // namespace rule

/// Coordinates inside [-kClampSlack, 1 + kClampSlack] are clamped into [0,1]
/// by parse_layout; anything further out is a violation.
inline constexpr double kClampSlack = 0.02;

/// Thrown by parse_layout when the document parses but breaks the schema.
class LayoutValidationError : public Error {
 public:
  explicit LayoutValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// Thrown by parse_layout on malformed JSON.
class LayoutParseError : public Error {
 public:
  LayoutParseError(std::size_t byte, const std::string& what);
  std::size_t byte_offset() const noexcept { return byte_; }

 private:
  std::size_t byte_;
};

/// "Given an image of {caption}, we show {rule}". Multiple captions are
/// joined with "; ".
std::string build_prompt(const std::vector<std::string>& query_captions,
                         std::string_view relative_caption);

std::vector<Violation> validate_layout(const ProxyLayout& layout);

/// Parses {"scene": ..., "instances": [{"desc", "bbox": [x1,y1,x2,y2], "modality"}]}.
ProxyLayout parse_layout(std::string_view raw);
std::string serialize_layout(const ProxyLayout& layout);

/// Every image-modality instance is followed by an image_and_text copy with
/// the same box and description. Not idempotent.
ProxyLayout duplicate_image_instances(const ProxyLayout& layout);

}  // namespace ipcir::layout
