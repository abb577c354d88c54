// tests/test_model.cc

// Copyright 2026  The dropclass Authors

// See the LICENSE file in the top-level directory for the full text.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>

#include "doctest.h"
#include "dropclass/error.h"
#include "dropclass/model.h"

using namespace dropclass;

TEST_SUITE("model") {

TEST_CASE("checkpoint round trip at stored precision") {
  EmbedderConfig config;
  config.feat_dim = 6;
  config.hidden = {5, 4};
  config.embed_dim = 3;
  Model m = Model::Initialize(config, 7, 11);
  m.active_rows = {0, 2, 5};
  m.final_lr = 0.0125;
  m.loss_scale = 30.0;
  const auto dir = std::filesystem::temp_directory_path() / "dropclass_tests";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "m.dckm").string();
  SaveModel(m, path);
  const Model back = LoadModel(path);
  CHECK(back.embedder.config() == config);
  CHECK(back.n_classes == 7);
  CHECK(back.active_rows == m.active_rows);
  CHECK(back.final_lr == 0.0125);
  CHECK(back.loss_scale == 30.0);
  for (std::size_t i = 0; i < m.head.weights.size(); ++i)
    CHECK(back.head.weights.Values()[i] == float(m.head.weights.Values()[i]));
  CHECK(SerializeModel(back) == SerializeModel(m));
  CHECK(SerializeModel(RoundToStoredPrecision(m)) == SerializeModel(m));
}

TEST_CASE("merged row survives the round trip") {
  EmbedderConfig config;
  config.feat_dim = 2;
  config.hidden = {3};
  config.embed_dim = 2;
  Model m = Model::Initialize(config, 4, 1);
  m.head.weights.AppendRow(std::vector<double>{0.5, -0.5});
  m.head.grads.AppendRow(std::vector<double>{0.0, 0.0});
  m.has_merged_row = true;
  m.active_rows = {1, 3, 4};
  const Model back = ParseModel(SerializeModel(m));
  CHECK(back.has_merged_row);
  CHECK(back.head.rows() == 5);
  CHECK(back.head.weights(4, 0) == 0.5);
}

TEST_CASE("corrupt checkpoints") {
  EmbedderConfig config;
  config.feat_dim = 2;
  config.hidden = {3};
  config.embed_dim = 2;
  const auto bytes = SerializeModel(Model::Initialize(config, 3, 1));
  CHECK(bytes[0] == 'D');
  CHECK(bytes[3] == 'M');
  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(ParseModel(bad), FormatError);
  bad = bytes;
  bad[4] = 9;  // version
  CHECK_THROWS_AS(ParseModel(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(ParseModel(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(ParseModel(bad), FormatError);
  CHECK_THROWS_AS(LoadModel("/nonexistent/dir/m.dckm"), IoError);
  CHECK_THROWS_AS(Model::Initialize(config, 1, 0), ValidationError);
}

}  // TEST_SUITE
