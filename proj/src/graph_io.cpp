#include "sgtlab/graph_io.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sgtlab {

using nlohmann::json;

namespace {

json graph_to_json(const SceneGraph& g, const Vocabulary& v, const Layout* layout) {
  json doc;
  doc["version"] = 1;
  json objs = json::array();
  for (int i = 0; i < g.n(); ++i) {
    objs.push_back({{"id", i}, {"category", v.object_name(g.objects[i])}});
  }
  doc["objects"] = std::move(objs);
  json rels = json::array();
  for (int i = 0; i < g.n(); ++i) {
    for (int j = 0; j < g.n(); ++j) {
      if (g.rel(i, j) == Vocabulary::kNoRelation) continue;
      rels.push_back({{"subject", i},
                      {"predicate", v.relation_name(g.rel(i, j))},
                      {"object", j}});
    }
  }
  doc["relations"] = std::move(rels);
  if (layout) {
    if (layout->n() != g.n()) throw std::invalid_argument("serialize_graph: layout size mismatch");
    json boxes = json::array();
    for (int i = 0; i < layout->n(); ++i) {
      const Box& b = layout->boxes[i];
      boxes.push_back({{"id", i}, {"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
    }
    doc["boxes"] = std::move(boxes);
  }
  return doc;
}

const json& field(const json& j, const char* name, const char* where) {
  auto it = j.find(name);
  if (it == j.end())
    throw ParseError(std::string("graph document: missing field '") + name + "' in " + where);
  return *it;
}

ParsedScene graph_from_json(const json& doc, const Vocabulary& v) {
  if (field(doc, "version", "document").get<int>() != 1)
    throw ParseError("graph document: unsupported version");
  const json& objs = field(doc, "objects", "document");
  if (!objs.is_array()) throw ParseError("graph document: 'objects' is not a list");

  const int n = static_cast<int>(objs.size());
  SceneGraph g = SceneGraph::empty(n);
  std::vector<bool> seen(n, false);
  for (const auto& o : objs) {
    const int id = field(o, "id", "objects").get<int>();
    if (id < 0 || id >= n || seen[id])
      throw ParseError("graph document: object id " + std::to_string(id) +
                       " is out of range or repeated");
    seen[id] = true;
    const std::string cat = field(o, "category", "objects").get<std::string>();
    auto idx = v.object_index(cat);
    if (!idx) throw ParseError("graph document: unknown category '" + cat + "'");
    g.objects[id] = *idx;
  }
  for (const auto& r : field(doc, "relations", "document")) {
    const int s = field(r, "subject", "relations").get<int>();
    const int o = field(r, "object", "relations").get<int>();
    if (s < 0 || s >= n || o < 0 || o >= n)
      throw ParseError("graph document: relation endpoint out of range");
    const std::string p = field(r, "predicate", "relations").get<std::string>();
    auto idx = v.relation_index(p);
    if (!idx) throw ParseError("graph document: unknown predicate '" + p + "'");
    g.rel(s, o) = *idx;
  }

  ParsedScene out{std::move(g), std::nullopt};
  if (doc.contains("boxes")) {
    Layout layout;
    layout.boxes.assign(n, Box{});
    std::vector<bool> have(n, false);
    for (const auto& b : doc["boxes"]) {
      const int id = field(b, "id", "boxes").get<int>();
      if (id < 0 || id >= n || have[id])
        throw ParseError("graph document: box id " + std::to_string(id) +
                         " is out of range or repeated");
      have[id] = true;
      layout.boxes[id] = Box{field(b, "x", "boxes").get<double>(),
                             field(b, "y", "boxes").get<double>(),
                             field(b, "w", "boxes").get<double>(),
                             field(b, "h", "boxes").get<double>()};
    }
    for (int i = 0; i < n; ++i)
      if (!have[i]) throw ParseError("graph document: missing box for object " + std::to_string(i));
    out.layout = std::move(layout);
  }
  return out;
}

json parse_json(const std::string& text, const char* what) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ParseError(std::string(what) + ": malformed document");
  return doc;
}

}  // namespace

std::string serialize_graph(const SceneGraph& g, const Vocabulary& v, const Layout* layout) {
  return graph_to_json(g, v, layout).dump();
}

ParsedScene parse_graph(const std::string& text, const Vocabulary& v) {
  return graph_from_json(parse_json(text, "graph document"), v);
}

std::string serialize_layout(const Layout& layout) {
  json doc;
  doc["version"] = 1;
  json boxes = json::array();
  for (int i = 0; i < layout.n(); ++i) {
    const Box& b = layout.boxes[i];
    boxes.push_back({{"id", i}, {"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
  }
  doc["boxes"] = std::move(boxes);
  return doc.dump();
}

Layout parse_layout(const std::string& text, int expected_n) {
  json doc = parse_json(text, "layout document");
  const json& boxes = field(doc, "boxes", "document");
  Layout layout;
  layout.boxes.assign(expected_n, kMaskedBox);
  for (const auto& b : boxes) {
    const int id = field(b, "id", "boxes").get<int>();
    if (id < 0 || id >= expected_n)
      throw ParseError("layout document: box id out of range");
    layout.boxes[id] = Box{field(b, "x", "boxes").get<double>(),
                           field(b, "y", "boxes").get<double>(),
                           field(b, "w", "boxes").get<double>(),
                           field(b, "h", "boxes").get<double>()};
  }
  return layout;
}

std::string serialize_vocabulary(const Vocabulary& v) {
  json doc;
  doc["objects"] = std::vector<std::string>(v.object_names().begin(),
                                            v.object_names().begin() + v.category_count());
  doc["relations"] = std::vector<std::string>(
      v.relation_names().begin() + 1, v.relation_names().begin() + 1 + v.base_relation_count());
  doc["self_converse"] = v.self_converse_names();
  return doc.dump();
}

Vocabulary parse_vocabulary(const std::string& text) {
  json doc = parse_json(text, "vocabulary document");
  return Vocabulary::build(field(doc, "objects", "document").get<std::vector<std::string>>(),
                           field(doc, "relations", "document").get<std::vector<std::string>>(),
                           doc.value("self_converse", std::vector<std::string>{}));
}

Vocabulary load_vocabulary(const std::string& path) {
  return parse_vocabulary(read_text_file(path));
}

std::string serialize_scene_image(const SceneImage& img) {
  json doc;
  doc["version"] = 1;
  doc["width"] = img.width;
  doc["height"] = img.height;
  doc["raster"] = img.raster;
  doc["validity"] = img.validity;
  return doc.dump();
}

SceneImage parse_scene_image(const std::string& text) {
  json doc = parse_json(text, "image document");
  SceneImage img;
  img.width = field(doc, "width", "document").get<int>();
  img.height = field(doc, "height", "document").get<int>();
  img.raster = field(doc, "raster", "document").get<std::vector<int16_t>>();
  img.validity = field(doc, "validity", "document").get<std::vector<uint8_t>>();
  const size_t want = static_cast<size_t>(img.width) * img.height;
  if (img.raster.size() != want || img.validity.size() != want)
    throw ParseError("image document: raster size does not match dimensions");
  return img;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ostringstream out;
  json header;
  header["type"] = "header";
  header["version"] = 1;
  header["vocabulary"] = json::parse(serialize_vocabulary(ds.vocab));
  out << header.dump() << "\n";
  for (const auto& scene : ds.scenes) {
    out << serialize_graph(scene.graph, ds.vocab, &scene.layout) << "\n";
  }
  write_text_file_atomic(path, out.str());
}

Dataset load_dataset(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ParseError("dataset: empty file");
  json header = parse_json(line, "dataset header");
  if (header.value("type", "") != "header")
    throw ParseError("dataset: first line is not a header record");
  Dataset ds;
  ds.vocab = parse_vocabulary(field(header, "vocabulary", "header").dump());
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ParsedScene scene;
    try {
      scene = parse_graph(line, ds.vocab);
    } catch (const ParseError& e) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!scene.layout)
      throw ParseError("dataset line " + std::to_string(line_no) + ": scene has no boxes");
    ds.scenes.push_back({std::move(scene.graph), std::move(*scene.layout)});
  }
  return ds;
}

std::string read_text_file(const std::string& path) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (!fs::exists(p)) {
    if (const char* cache = std::getenv("SGTLAB_CACHE"); cache && p.is_relative()) {
      fs::path alt = fs::path(cache) / p;
      if (fs::exists(alt)) p = alt;
    }
  }
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
    out << contents;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace sgtlab
