#include <cmath>

#include <gtest/gtest.h>

#include "ipcir/layout.hpp"
#include "layout_corpus.hpp"

using namespace ipcir;
using namespace ipcir::layout;

namespace {

LayoutInstance box(double x1, double y1, double x2, double y2, Modality m = Modality::text) {
  return {"thing", {x1, y1, x2, y2}, m};
}

ProxyLayout one(LayoutInstance inst) { return {"a scene", {std::move(inst)}}; }

std::vector<Violation> parse_violations(const std::string& doc) {
  try {
    parse_layout(doc);
  } catch (const LayoutValidationError& e) {
    return e.violations();
  }
  return {};
}

}  // namespace

TEST(BuildPrompt, FillsTemplateVerbatim) {
  EXPECT_EQ(build_prompt({"a dog on grass"}, "add a red hat"),
            "Given an image of a dog on grass, we show add a red hat");
  EXPECT_EQ(build_prompt({"x"}, "y"), "Given an image of x, we show y");
}

TEST(BuildPrompt, MultipleCaptionsJoined) {
  const std::string golden =
      "Given an image of two cats on a sofa; a tabby and a black cat resting, we show make it night time";
  EXPECT_EQ(build_prompt({"two cats on a sofa", "a tabby and a black cat resting"}, "make it night time"), golden);
}

TEST(BuildPrompt, EmptyInputsRejected) {
  EXPECT_THROW(build_prompt({}, "rule"), Error);
  EXPECT_THROW(build_prompt({""}, "rule"), Error);
  EXPECT_THROW(build_prompt({"caption"}, ""), Error);
  try {
    build_prompt({"caption"}, "");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::argument);
  }
}

TEST(ValidateLayout, WellFormedBox) { EXPECT_TRUE(validate_layout(one(box(0.2, 0.2, 0.8, 0.9))).empty()); }

TEST(ValidateLayout, InvertedBox) {
  const auto v = validate_layout(one(box(0.8, 0.2, 0.2, 0.9)));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], (Violation{0, "x1<x2"}));
}

TEST(ValidateLayout, LayoutLevelRules) {
  const auto v = validate_layout(ProxyLayout{});
  EXPECT_EQ(v, (std::vector<Violation>{{-1, "scene_non_empty"}, {-1, "at_least_one_instance"}}));
}

TEST(ValidateLayout, ReportsEveryViolation) {
  ProxyLayout l{"s", {box(0.2, 0.2, 0.8, 0.9), box(0.9, 0.9, 0.1, 0.1), {"", {0, 0, 2, 1}, Modality::image}}};
  const auto v = validate_layout(l);
  EXPECT_EQ(v, (std::vector<Violation>{{1, "x1<x2"}, {1, "y1<y2"}, {2, "description_non_empty"}, {2, "0<=x1,x2<=1"}}));
}

TEST(ValidateLayout, OverlappingBoxesAreLegal) {
  ProxyLayout l{"s", {box(0.1, 0.1, 0.9, 0.9), box(0.2, 0.2, 0.5, 0.5)}};
  EXPECT_TRUE(validate_layout(l).empty());
}

TEST(ParseLayout, ClampsSmallOvershoot) {
  const auto l = parse_layout(
      R"({"scene":"s","instances":[{"desc":"d","bbox":[-0.02,-0.01,1.02,1.015],"modality":"image"}]})");
  EXPECT_EQ(l.instances[0].bbox, (BBox{0, 0, 1, 1}));
  EXPECT_EQ(l.instances[0].modality, Modality::image);
}

TEST(ParseLayout, LargeOvershootIsViolation) {
  const auto v = parse_violations(
      R"({"scene":"s","instances":[{"desc":"d","bbox":[0.1,0.1,1.03,0.5],"modality":"text"}]})");
  EXPECT_EQ(v, (std::vector<Violation>{{0, "0<=x1,x2<=1"}}));
}

TEST(ParseLayout, PixelBoxesRejectedNotConverted) {
  const auto v = parse_violations(
      R"({"scene":"s","instances":[{"desc":"d","bbox":[12,40,320,480],"modality":"text"}]})");
  EXPECT_EQ(v, (std::vector<Violation>{{0, "0<=x1,x2<=1"}, {0, "0<=y1,y2<=1"}}));
}

TEST(ParseLayout, MalformedJsonReportsByteOffset) {
  const std::string doc = R"({"scene": "s", "instances": [ }])";
  try {
    parse_layout(doc);
    FAIL();
  } catch (const LayoutParseError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
    // nlohmann reports the 1-based position of the offending character.
    EXPECT_EQ(e.byte_offset(), doc.find('}') + 1);
  }
}

TEST(ParseLayout, StructuralAndSemanticFindingsTogether) {
  const auto v = parse_violations(R"({"scene":"","instances":[
      {"desc":"a","bbox":[0.1,0.1,0.2],"modality":"text"},
      {"bbox":[0.5,0.5,0.4,0.6],"modality":"video"},
      7]})");
  EXPECT_EQ(v, (std::vector<Violation>{{0, "bbox_4_numbers"},
                                       {1, "desc_string"},
                                       {1, "modality_enum"},
                                       {2, "instance_object"},
                                       {-1, "scene_non_empty"},
                                       {1, "x1<x2"}}));
}

TEST(ParseLayout, NonObjectRoot) { EXPECT_EQ(parse_violations("[1,2]"), (std::vector<Violation>{{-1, "root_object"}})); }

TEST(ParseLayout, SerializeRoundTrip) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 100; ++k) {
    const auto l = test::random_valid_layout(rng, k);
    EXPECT_EQ(parse_layout(serialize_layout(l)), l);
  }
}

TEST(DuplicateImageInstances, TextPlusImage) {
  ProxyLayout l{"s", {box(0.1, 0.1, 0.4, 0.4, Modality::text), box(0.5, 0.5, 0.9, 0.9, Modality::image)}};
  const auto d = duplicate_image_instances(l);
  ASSERT_EQ(d.instances.size(), 3u);
  EXPECT_EQ(d.instances[0], l.instances[0]);
  EXPECT_EQ(d.instances[1], l.instances[1]);
  EXPECT_EQ(d.instances[2].bbox, l.instances[1].bbox);
  EXPECT_EQ(d.instances[2].description, l.instances[1].description);
  EXPECT_EQ(d.instances[2].modality, Modality::image_and_text);
}

TEST(DuplicateImageInstances, NoImagesIsIdentity) {
  ProxyLayout l{"s", {box(0.1, 0.1, 0.4, 0.4), box(0.2, 0.2, 0.3, 0.3, Modality::image_and_text)}};
  EXPECT_EQ(duplicate_image_instances(l), l);
}

TEST(DuplicateImageInstances, ThreeImages) {
  ProxyLayout l{"s", {box(0.1, 0.1, 0.2, 0.2, Modality::image), box(0.3, 0.3, 0.4, 0.4, Modality::image),
                      box(0.5, 0.5, 0.6, 0.6, Modality::image)}};
  const auto d = duplicate_image_instances(l);
  ASSERT_EQ(d.instances.size(), 6u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(d.instances[2 * i + 1].bbox, l.instances[i].bbox);
    EXPECT_EQ(d.instances[2 * i + 1].modality, Modality::image_and_text);
  }
}

TEST(DuplicateImageInstances, NotIdempotent) {
  ProxyLayout l{"s", {box(0.1, 0.1, 0.4, 0.4, Modality::text), box(0.5, 0.5, 0.9, 0.9, Modality::image)}};
  const auto once = duplicate_image_instances(l);
  const auto twice = duplicate_image_instances(once);
  EXPECT_EQ(once.instances.size(), 3u);
  EXPECT_EQ(twice.instances.size(), 4u);
}

TEST(LayoutCorpus, SeededFaultsFlaggedExactly) {
  const auto corpus = test::make_layout_corpus(50, 10, 2024);
  std::vector<test::SeededFault> found;
  for (std::size_t k = 0; k < corpus.layouts.size(); ++k) {
    for (const auto& v : validate_layout(corpus.layouts[k])) found.push_back({k, v});
  }
  ASSERT_EQ(found.size(), 10u);
  for (std::size_t f = 0; f < found.size(); ++f) {
    EXPECT_EQ(found[f].layout, corpus.faults[f].layout);
    EXPECT_EQ(found[f].violation, corpus.faults[f].violation);
  }
}

TEST(LayoutCorpus, ValidIffNoViolationsAfterMutation) {
  std::mt19937_64 rng(77);
  for (int k = 0; k < 300; ++k) {
    auto l = test::random_valid_layout(rng, k);
    ASSERT_TRUE(validate_layout(l).empty());
    test::inject_fault(l, k, rng);
    EXPECT_EQ(validate_layout(l).size(), 1u) << "mutation " << k % 9;
  }
}
