#include "sgtlab/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>

#include "json.hpp"
#include "sgtlab/graph_io.hpp"

namespace sgtlab {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape}, {"data", t.data}};
}

Tensor tensor_from_json(const json& j) {
  Tensor t(j.at("shape").get<std::vector<int>>());
  auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<int64_t>(data.size()) != t.size())
    throw CheckpointError("checkpoint: tensor data does not match its shape manifest");
  t.data = std::move(data);
  return t;
}

std::string digest_of(const json& doc) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(doc.dump()));
  return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["task"] = data.task;
  doc["config"] = json::parse(data.config_json);
  doc["vocabulary"] = json::parse(serialize_vocabulary(data.vocab));
  doc["step"] = data.step;
  json params = json::array();
  for (const auto& name : data.params.names())
    params.push_back({{"name", name}, {"tensor", tensor_to_json(data.params.at(name))}});
  doc["params"] = std::move(params);
  json adam;
  adam["steps"] = data.adam_steps;
  json slots = json::array();
  for (const auto& [name, slot] : data.adam_slots)
    slots.push_back(
        {{"name", name}, {"m", tensor_to_json(slot.m)}, {"v", tensor_to_json(slot.v)}});
  adam["slots"] = std::move(slots);
  doc["adam"] = std::move(adam);
  doc["rng"] = {{"s", data.rng_state.s},
                {"has_spare", data.rng_state.has_spare},
                {"spare_bits", data.rng_state.spare_bits}};
  doc["digest"] = digest_of(doc);
  write_text_file_atomic(path, doc.dump());
}

CheckpointData load_checkpoint(const std::string& path, const std::string& expected_task) {
  json doc = json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded()) throw CheckpointError("checkpoint: malformed file");
  if (!doc.contains("format_version") || doc["format_version"].get<int>() != kFormatVersion)
    throw CheckpointError("checkpoint: format version mismatch");
  if (!doc.contains("digest")) throw CheckpointError("checkpoint: missing digest");
  const std::string stored = doc["digest"].get<std::string>();
  doc.erase("digest");
  if (digest_of(doc) != stored)
    throw CheckpointError("checkpoint: content digest mismatch (corrupt file)");

  CheckpointData data;
  data.task = doc.at("task").get<std::string>();
  if (!expected_task.empty() && data.task != expected_task)
    throw CheckpointError("checkpoint: task tag is '" + data.task + "', expected '" +
                          expected_task + "'");
  data.config_json = doc.at("config").dump();
  data.vocab = parse_vocabulary(doc.at("vocabulary").dump());
  data.step = doc.at("step").get<int64_t>();
  for (const auto& entry : doc.at("params"))
    data.params.add(entry.at("name").get<std::string>(), tensor_from_json(entry.at("tensor")));
  data.adam_steps = doc.at("adam").at("steps").get<int64_t>();
  for (const auto& entry : doc.at("adam").at("slots")) {
    Adam::Slot slot{tensor_from_json(entry.at("m")), tensor_from_json(entry.at("v"))};
    data.adam_slots.emplace(entry.at("name").get<std::string>(), std::move(slot));
  }
  const auto& rng = doc.at("rng");
  data.rng_state.s = rng.at("s").get<std::array<uint64_t, 4>>();
  data.rng_state.has_spare = rng.at("has_spare").get<bool>();
  data.rng_state.spare_bits = rng.at("spare_bits").get<uint64_t>();
  return data;
}

void adopt_params(ParamStore& into, const ParamStore& from) {
  if (into.names().size() != from.names().size())
    throw CheckpointError("checkpoint: parameter count differs from the model manifest");
  for (const auto& name : into.names()) {
    if (!from.has(name))
      throw CheckpointError("checkpoint: missing parameter block '" + name + "'");
    if (from.at(name).shape != into.at(name).shape)
      throw CheckpointError("checkpoint: shape manifest mismatch for '" + name + "'");
    into.at(name) = from.at(name);
  }
}

}  // namespace sgtlab
