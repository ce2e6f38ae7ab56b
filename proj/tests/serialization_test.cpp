/* Copyright 2026 The MVDeTr Toolkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "mvdetr/serialization.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace mvdetr {
namespace {

TEST(CalibrationJson, RoundTripIsBitExact) {
  Rng rng(1);
  CalibrationSet set;
  set.grid = GroundGrid{{-1.25, 3.0}, 0.025, {480, 1440}, 4};
  for (int c = 0; c < 3; ++c) {
    const Vec3 eye(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(3, 8));
    set.cameras.push_back(CameraCalibration::look_at(eye, Vec3(0.1, 0.2, 0.0),
                                                     rng.uniform(300, 900), {720, 1280}));
  }
  const Json j = to_json(set);
  const CalibrationSet back = calibration_set_from_json(Json::parse(j.dump()));
  ASSERT_EQ(back.cameras.size(), 3u);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(back.cameras[c].intrinsic, set.cameras[c].intrinsic);
    EXPECT_EQ(back.cameras[c].rotation, set.cameras[c].rotation);
    EXPECT_EQ(back.cameras[c].translation, set.cameras[c].translation);
    EXPECT_EQ(back.cameras[c].image_size, set.cameras[c].image_size);
  }
  EXPECT_EQ(back.grid.origin.x, -1.25);
  EXPECT_EQ(back.grid.dims, (Dims{480, 1440}));
}

TEST(CalibrationJson, MissingOrShortFieldsThrow) {
  Json j = to_json(CameraCalibration::look_at(Vec3(5, 0, 3), Vec3(0, 0, 0), 500, {100, 200}));
  Json bad = j;
  bad.erase("rotation");
  EXPECT_THROW(calibration_from_json(bad), FormatError);
  bad = j;
  bad["translation"] = {1.0, 2.0};
  EXPECT_THROW(calibration_from_json(bad), FormatError);
  EXPECT_THROW(calibration_set_from_json(Json::object()), FormatError);
}

TEST(ConfigJson, DefaultsFillMissingKeys) {
  const LossConfig l = loss_from_json(Json::parse(R"({"beta": 3})"));
  EXPECT_EQ(l.alpha, 2.0);
  EXPECT_EQ(l.beta, 3.0);
  const DecodeConfig d = decode_from_json(Json::parse(R"({"max_det": 5})"));
  EXPECT_EQ(d.max_det, 5);
  EXPECT_EQ(d.score_thresh, 0.4);
  const AugmentationConfig a =
      augmentation_from_json(Json::parse(R"({"flip_prob": 0, "image_size": [10, 20]})"));
  EXPECT_EQ(a.flip_prob, 0.0);
  EXPECT_EQ(a.image_size, (Dims{10, 20}));
  EXPECT_THROW(augmentation_from_json(Json::parse(R"({"flip_prob": 2})")), InvalidConfig);
  EXPECT_THROW(loss_from_json(Json::parse(R"({"sigma_cells": 0})")), InvalidConfig);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(2);
  std::vector<NamedTensor> ts{{"a", {2, 3}, {}}, {"b.bias", {4}, {}}};
  for (auto& t : ts) {
    std::size_t n = 1;
    for (int s : t.shape) n *= s;
    for (std::size_t i = 0; i < n; ++i) t.data.push_back(rng.normal() * std::pow(10.0, rng.uniform(-30, 30)));
  }
  ts[0].data[0] = 0.1;
  ts[0].data[1] = -0.0;
  ts[0].data[2] = 5e-324;
  const std::string text = checkpoint_to_json(ts).dump(2);
  EXPECT_EQ(checkpoint_from_json(Json::parse(text)), ts);
}

TEST(Checkpoint, RejectsForeignDocuments) {
  EXPECT_THROW(checkpoint_from_json(Json::parse(R"({"format": "other"})")), FormatError);
  Json j = checkpoint_to_json({{"w", {2, 2}, {1, 2, 3, 4}}});
  j["tensors"][0]["shape"] = {3};
  EXPECT_THROW(checkpoint_from_json(j), FormatError);
}

TEST(JsonFile, ParseErrorsBecomeFormatError) {
  const std::string path = ::testing::TempDir() + "/bad.json";
  {
    std::ofstream(path) << "{ not json";
  }
  EXPECT_THROW(read_json_file(path), FormatError);
  EXPECT_THROW(read_json_file(path + ".missing"), FormatError);
}

}  // namespace
}  // namespace mvdetr
