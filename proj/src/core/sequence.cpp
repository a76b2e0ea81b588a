#include "swnet/sequence.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace swnet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "sequence codec assumes a little-endian host");

constexpr char kMagic[4] = {'W', 'S', 'Q', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 * 3 + 4 + 1 + 1 + 2;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) {
    throw Error(ErrorCode::kFormat, "sequence file truncated");
  }
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

void WaveSequence::validate() const {
  if (frames.empty()) throw Error(ErrorCode::kShape, "sequence has no frames");
  if (!(frame_interval > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "sequence frame interval must be positive");
  }
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].rows() != rows() || frames[t].cols() != cols()) {
      throw Error(ErrorCode::kShape, "frame " + std::to_string(t) + " is " +
                                         std::to_string(frames[t].rows()) + "x" +
                                         std::to_string(frames[t].cols()) + ", geometry is " +
                                         std::to_string(rows()) + "x" + std::to_string(cols()));
    }
  }
}

std::vector<std::uint8_t> encode_sequence(const WaveSequence& seq) {
  seq.validate();
  const std::size_t cells = seq.rows() * seq.cols();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + (seq.length() + 1) * cells * 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.cols()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.length()));
  put<float>(out, static_cast<float>(seq.frame_interval));
  put<std::uint8_t>(out, seq.normalized ? 1 : 0);
  put<std::uint8_t>(out, seq.geometry.edges.bits());
  put<std::uint16_t>(out, 0);
  for (std::uint8_t m : seq.geometry.mask.values()) put<float>(out, m ? 1.0f : 0.0f);
  for (const Frame& f : seq.frames) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(f.values().data());
    out.insert(out.end(), p, p + cells * sizeof(float));
  }
  return out;
}

void write_sequence(const std::filesystem::path& path, const WaveSequence& seq) {
  const auto bytes = encode_sequence(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

WaveSequence decode_sequence(const std::vector<std::uint8_t>& bytes, std::optional<Vec2> extent) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, "not a WSQ1 sequence file");
  }
  std::size_t pos = 4;
  const auto rows = get<std::uint32_t>(bytes, pos);
  const auto cols = get<std::uint32_t>(bytes, pos);
  const auto count = get<std::uint32_t>(bytes, pos);
  const auto interval = get<float>(bytes, pos);
  const auto normalized = get<std::uint8_t>(bytes, pos);
  const auto edge_bits = get<std::uint8_t>(bytes, pos);
  pos += 2;
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  if (bytes.size() != kHeaderBytes + (static_cast<std::size_t>(count) + 1) * cells * 4) {
    throw Error(ErrorCode::kFormat, "sequence file size does not match its header");
  }

  WaveSequence seq;
  seq.frame_interval = interval;
  seq.normalized = normalized != 0;
  seq.geometry.edges = EdgeConditions::from_bits(edge_bits);
  if (extent) {
    seq.geometry.extent = *extent;
  } else {
    const double longer = std::max(rows, cols);
    seq.geometry.extent = {cols / longer, rows / longer};
  }
  seq.geometry.mask = Grid<std::uint8_t>(rows, cols);
  for (std::size_t i = 0; i < cells; ++i) {
    seq.geometry.mask[i] = get<float>(bytes, pos) >= 0.5f ? 1 : 0;
  }
  seq.frames.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    Frame f(rows, cols);
    std::memcpy(f.values().data(), bytes.data() + pos, cells * sizeof(float));
    pos += cells * sizeof(float);
    seq.frames.push_back(std::move(f));
  }
  seq.validate();
  return seq;
}

WaveSequence read_sequence(const std::filesystem::path& path, std::optional<Vec2> extent) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open sequence file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_sequence(bytes, extent);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace swnet
