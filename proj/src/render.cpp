#include "sgtlab/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "sgtlab/rng.hpp"

namespace sgtlab {

namespace {

std::string category_color(const std::string& name) {
  // stable hue from the name hash, fixed saturation/lightness
  const uint64_t h = fnv1a64(name);
  const double hue = static_cast<double>(h % 360);
  const double s = 0.62, l = 0.55;
  const double c = (1 - std::fabs(2 * l - 1)) * s;
  const double hp = hue / 60.0;
  const double x = c * (1 - std::fabs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = l - c / 2;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>((r + m) * 255),
                static_cast<int>((g + m) * 255), static_cast<int>((b + m) * 255));
  return buf;
}

std::string px(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

}  // namespace

std::string render_layout_svg(const SceneGraph& g, const Layout& layout, const Vocabulary& v,
                              const RenderStyle& style) {
  if (g.n() != layout.n())
    throw std::invalid_argument("render_layout_svg: graph/layout misaligned");
  const double side = style.canvas_px;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.canvas_px << "\" height=\""
      << style.canvas_px << "\" viewBox=\"0 0 " << style.canvas_px << " " << style.canvas_px
      << "\">\n";
  out << "<!-- draw order follows the object list; later boxes paint over earlier ones -->\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << style.canvas_px << "\" height=\"" << style.canvas_px
      << "\" fill=\"#f8f8f8\" stroke=\"#404040\"/>\n";

  for (int i = 0; i < g.n(); ++i) {
    if (v.is_special_object(g.objects[i])) continue;
    const Box& b = layout.boxes[i];
    const std::string& name = v.object_name(g.objects[i]);
    out << "<rect x=\"" << px(b.left() * side) << "\" y=\"" << px(b.top() * side) << "\" width=\""
        << px(b.w * side) << "\" height=\"" << px(b.h * side) << "\" fill=\""
        << category_color(name) << "\" fill-opacity=\"0.55\" stroke=\"#202020\"/>\n";
    out << "<text x=\"" << px(b.left() * side + 2) << "\" y=\"" << px(b.top() * side + 12)
        << "\" font-size=\"11\" font-family=\"monospace\">" << name << " #" << i << "</text>\n";
  }

  if (style.relation_arrows) {
    for (int i = 0; i < g.n(); ++i)
      for (int j = 0; j < g.n(); ++j) {
        const int r = g.rel(i, j);
        if (i == j || r == Vocabulary::kNoRelation || v.is_special_relation(r)) continue;
        if (v.is_special_object(g.objects[i]) || v.is_special_object(g.objects[j])) continue;
        const Box& a = layout.boxes[i];
        const Box& b = layout.boxes[j];
        out << "<line x1=\"" << px(a.x * side) << "\" y1=\"" << px(a.y * side) << "\" x2=\""
            << px(b.x * side) << "\" y2=\"" << px(b.y * side)
            << "\" stroke=\"#303030\" stroke-width=\"0.8\" stroke-dasharray=\"3 2\"/>\n";
        out << "<text x=\"" << px((a.x + b.x) / 2 * side) << "\" y=\""
            << px((a.y + b.y) / 2 * side) << "\" font-size=\"9\" font-family=\"monospace\" "
            << "fill=\"#303030\">" << v.relation_name(r) << "</text>\n";
      }
  }
  out << "</svg>\n";
  return out.str();
}

SceneImage rasterize_layout(const SceneGraph& g, const Layout& layout, const Vocabulary& v,
                            int size) {
  if (size < 16) throw std::invalid_argument("rasterize_layout: size below 16");
  if (g.n() != layout.n())
    throw std::invalid_argument("rasterize_layout: graph/layout misaligned");
  SceneImage img;
  img.width = img.height = size;
  img.raster.assign(static_cast<size_t>(size) * size, SceneImage::kBackground);
  img.validity.assign(static_cast<size_t>(size) * size, 1);
  for (int i = 0; i < g.n(); ++i) {
    if (v.is_special_object(g.objects[i])) continue;
    const Box& b = layout.boxes[i];
    if (b.w <= 0 || b.h <= 0) continue;
    // a cell is painted when its center lies inside the box
    const int c0 = std::max(0, static_cast<int>(std::ceil(b.left() * size - 0.5)));
    const int c1 = std::min(size - 1, static_cast<int>(std::floor(b.right() * size - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(b.top() * size - 0.5)));
    const int r1 = std::min(size - 1, static_cast<int>(std::floor(b.bottom() * size - 0.5)));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) img.at(r, c) = static_cast<int16_t>(g.objects[i]);
  }
  return img;
}

std::string scene_image_to_pgm(const SceneImage& img, const Vocabulary& v) {
  std::ostringstream out;
  out << "P2\n";
  out << "# category index + 1 per pixel; 0 is background\n";
  out << img.width << " " << img.height << "\n" << v.category_count() << "\n";
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      if (c) out << ' ';
      out << img.at(r, c) + 1;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace sgtlab
