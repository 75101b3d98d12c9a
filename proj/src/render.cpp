#include "bevsync/render.hpp"

#include "bevsync/io.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace bevsync::render {

std::string positionPgm(const field::TrajectoryField& f) {
  const int h = f.grid.height_cells, w = f.grid.width_cells;
  std::ostringstream out;
  out << "P5\n" << w << " " << h << "\n255\n";
  for (int r = h - 1; r >= 0; --r)  // y up
    for (int c = 0; c < w; ++c) {
      const double v = std::min(1.0, std::max(0.0, f.position(r, c)));
      out.put(static_cast<char>(std::lround(v * 255.0)));
    }
  return out.str();
}

namespace {

void hsvToRgb(double h, double s, double v, unsigned char rgb[3]) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c; g = x;
  } else if (hp < 2) {
    r = x; g = c;
  } else if (hp < 3) {
    g = c; b = x;
  } else if (hp < 4) {
    g = x; b = c;
  } else if (hp < 5) {
    r = x; b = c;
  } else {
    r = c; b = x;
  }
  const double m = v - c;
  rgb[0] = static_cast<unsigned char>(std::lround((r + m) * 255.0));
  rgb[1] = static_cast<unsigned char>(std::lround((g + m) * 255.0));
  rgb[2] = static_cast<unsigned char>(std::lround((b + m) * 255.0));
}

}  // namespace

std::string orientationPpm(const field::TrajectoryField& f) {
  const int h = f.grid.height_cells, w = f.grid.width_cells;
  std::ostringstream out;
  out << "P6\n" << w << " " << h << "\n255\n";
  for (int r = h - 1; r >= 0; --r) {
    for (int c = 0; c < w; ++c) {
      const double angle = std::atan2(f.orient_sin(r, c), f.orient_cos(r, c));
      const double hue = std::fmod(angle / M_PI * 180.0 + 360.0, 360.0);
      const double value = std::min(1.0, std::max(0.0, f.position(r, c)));
      unsigned char rgb[3];
      hsvToRgb(hue, 1.0, value, rgb);
      out.put(static_cast<char>(rgb[0]));
      out.put(static_cast<char>(rgb[1]));
      out.put(static_cast<char>(rgb[2]));
    }
  }
  return out.str();
}

namespace {

constexpr char kMagic[4] = {'B', 'F', 'L', 'D'};

template <class T>
void appendRaw(std::string& out, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <class T>
T readRaw(const std::string& in, std::size_t& off) {
  T v;
  require(off + sizeof(T) <= in.size(), "field binary: truncated");
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

void appendPlane(std::string& out, const PlaneD& p) {
  for (int r = 0; r < p.rows(); ++r)
    for (int c = 0; c < p.cols(); ++c) appendRaw(out, p(r, c));
}

PlaneD readPlane(const std::string& in, std::size_t& off, int h, int w) {
  PlaneD p(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) p(r, c) = readRaw<double>(in, off);
  return p;
}

}  // namespace

std::string fieldBinary(const field::TrajectoryField& f) {
  std::string body;
  appendRaw(body, static_cast<std::int32_t>(f.grid.height_cells));
  appendRaw(body, static_cast<std::int32_t>(f.grid.width_cells));
  appendRaw(body, f.grid.origin_x);
  appendRaw(body, f.grid.origin_y);
  appendRaw(body, f.grid.cell_size);
  appendPlane(body, f.position);
  appendPlane(body, f.orient_cos);
  appendPlane(body, f.orient_sin);

  std::string out(kMagic, 4);
  appendRaw(out, io::fnv1a64(body.data(), body.size()));
  out += body;
  return out;
}

field::TrajectoryField fieldFromBinary(const std::string& bytes) {
  require(bytes.size() > 12 && std::memcmp(bytes.data(), kMagic, 4) == 0,
          "field binary: bad magic");
  std::size_t off = 4;
  const std::uint64_t want = readRaw<std::uint64_t>(bytes, off);
  if (io::fnv1a64(bytes.data() + off, bytes.size() - off) != want)
    throw std::runtime_error("field binary: checksum mismatch");

  const int h = readRaw<std::int32_t>(bytes, off);
  const int w = readRaw<std::int32_t>(bytes, off);
  geom::GridSpec grid;
  grid.origin_x = readRaw<double>(bytes, off);
  grid.origin_y = readRaw<double>(bytes, off);
  grid.cell_size = readRaw<double>(bytes, off);
  grid.height_cells = h;
  grid.width_cells = w;

  auto f = field::TrajectoryField::empty(grid);
  f.position = readPlane(bytes, off, h, w);
  f.orient_cos = readPlane(bytes, off, h, w);
  f.orient_sin = readPlane(bytes, off, h, w);
  return f;
}

std::string prCurveSvg(const std::vector<eval::PrPoint>& curve,
                       const std::string& title) {
  const int size = 400, margin = 40;
  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << size << "' height='"
      << size << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << size / 2 << "' y='20' text-anchor='middle'>" << title
      << "</text>\n";
  auto px = [&](double recall) { return margin + recall * (size - 2 * margin); };
  auto py = [&](double precision) {
    return size - margin - precision * (size - 2 * margin);
  };
  out << "<line x1='" << margin << "' y1='" << size - margin << "' x2='"
      << size - margin << "' y2='" << size - margin << "' stroke='black'/>\n";
  out << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin
      << "' y2='" << size - margin << "' stroke='black'/>\n";
  if (!curve.empty()) {
    out << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
    for (const auto& p : curve)
      out << io::formatDouble(px(p.recall)) << "," << io::formatDouble(py(p.precision))
          << " ";
    out << "'/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace bevsync::render
