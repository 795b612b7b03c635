#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgtlab/scene.hpp"
#include "sgtlab/vocab.hpp"

namespace sgtlab {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParsedScene {
  SceneGraph graph;
  std::optional<Layout> layout;
};

// Graph document: {version, objects:[{id,category}], relations:[{subject,
// predicate,object}], boxes:[{id,x,y,w,h}]?}. NO_RELATION cells are omitted.
std::string serialize_graph(const SceneGraph& g, const Vocabulary& v,
                            const Layout* layout = nullptr);
ParsedScene parse_graph(const std::string& text, const Vocabulary& v);

std::string serialize_layout(const Layout& layout);
Layout parse_layout(const std::string& text, int expected_n);

std::string serialize_vocabulary(const Vocabulary& v);
Vocabulary parse_vocabulary(const std::string& text);
Vocabulary load_vocabulary(const std::string& path);

std::string serialize_scene_image(const SceneImage& img);
SceneImage parse_scene_image(const std::string& text);

struct SceneRecord {
  SceneGraph graph;
  Layout layout;
};

// Line-delimited dataset: a header record carrying the vocabulary, then one
// scene document per line.
struct Dataset {
  Vocabulary vocab;
  std::vector<SceneRecord> scenes;
};

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// Reads a whole file; resolves bare names against SGTLAB_CACHE when the path
// does not exist as given.
std::string read_text_file(const std::string& path);
// Writes via a temp file in the target directory, then renames.
void write_text_file_atomic(const std::string& path, const std::string& contents);

}  // namespace sgtlab
