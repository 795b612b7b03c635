#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "sgtlab/nn.hpp"
#include "sgtlab/rng.hpp"
#include "sgtlab/vocab.hpp"

namespace sgtlab {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Single self-describing container: format version, task tag, config echo,
// vocabulary, parameter blocks with shape manifests, optimizer state, RNG
// state, step counter, and a content digest.
struct CheckpointData {
  std::string task;         // "sge" | "g2l"
  std::string config_json;  // full config echo
  Vocabulary vocab;
  int64_t step = 0;
  ParamStore params;
  std::map<std::string, Adam::Slot> adam_slots;
  int64_t adam_steps = 0;
  Rng::State rng_state{{0, 0, 0, 0}, false, 0};
};

void save_checkpoint(const std::string& path, const CheckpointData& data);

// Verifies format version and content digest; when expected_task is nonempty
// a task-tag mismatch is fatal.
CheckpointData load_checkpoint(const std::string& path, const std::string& expected_task = "");

// Copies tensors from `from` into `into`; any name or shape difference against
// the freshly built model is a manifest error.
void adopt_params(ParamStore& into, const ParamStore& from);

}  // namespace sgtlab
