/* Copyright 2026 The mdecode Authors. All Rights Reserved.

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

#pragma once

#include "json.hpp"
#include "mdecode/harness.hpp"
#include "mdecode/types.hpp"

// nlohmann adapters. Field names match the struct members.
namespace mdecode {

void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);
void to_json(nlohmann::json& j, const BlockReport& r);
void from_json(const nlohmann::json& j, BlockReport& r);
void to_json(nlohmann::json& j, const DecodeTrace& t);
void from_json(const nlohmann::json& j, DecodeTrace& t);

void to_json(nlohmann::json& j, const ItemRecord& r);
void from_json(const nlohmann::json& j, ItemRecord& r);
void to_json(nlohmann::json& j, const BenchmarkAggregates& a);
void from_json(const nlohmann::json& j, BenchmarkAggregates& a);
void to_json(nlohmann::json& j, const RunMetadata& m);
void from_json(const nlohmann::json& j, RunMetadata& m);
void to_json(nlohmann::json& j, const BenchmarkReport& r);
void from_json(const nlohmann::json& j, BenchmarkReport& r);

}  // namespace mdecode
