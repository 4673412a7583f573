#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "tofspec/error.hpp"
#include "tofspec/timetag.hpp"

namespace tofspec::timetag {

namespace {

constexpr std::array<char, 4> kMagic{'T', 'T', 'A', 'G'};

template <class T>
void put_le(char* dst, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
}

template <class T>
T get_le(const char* src) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(src[i])) << (8 * i);
  return static_cast<T>(v);
}

constexpr std::size_t kRecordsPerBlock = 1 << 16;

}  // namespace

void write_tags(std::ostream& out, const TagStream& stream) {
  stream.validate();
  std::array<char, kTagFileHeaderBytes> header{};
  std::memcpy(header.data(), kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(header.data() + 4, kTagFileVersion);
  put_le<std::uint16_t>(header.data() + 6, stream.channel_count);
  put_le<std::uint64_t>(header.data() + 8, stream.clock_period_ps);
  put_le<std::uint64_t>(header.data() + 16, static_cast<std::uint64_t>(stream.tags.size()));
  out.write(header.data(), header.size());

  std::vector<char> block(kRecordsPerBlock * kTagRecordBytes);
  for (std::size_t start = 0; start < stream.tags.size(); start += kRecordsPerBlock) {
    const std::size_t n = std::min(kRecordsPerBlock, stream.tags.size() - start);
    for (std::size_t i = 0; i < n; ++i) {
      const TimeTag& t = stream.tags[start + i];
      char* rec = block.data() + i * kTagRecordBytes;
      rec[0] = static_cast<char>(t.channel);
      put_le<std::uint64_t>(rec + 1, t.timestamp_ps);
    }
    out.write(block.data(), static_cast<std::streamsize>(n * kTagRecordBytes));
  }
  if (!out) throw Error("write_tags: stream write failed");
}

void write_tags(const std::filesystem::path& path, const TagStream& stream) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write tag file " + path.string());
  write_tags(out, stream);
}

TagStream read_tags(std::istream& in) {
  std::array<char, kTagFileHeaderBytes> header{};
  in.read(header.data(), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size()))
    throw FormatError("tag file: truncated header", 0);
  if (std::memcmp(header.data(), kMagic.data(), kMagic.size()) != 0)
    throw FormatError("tag file: bad magic (expected \"TTAG\")", 0);
  const auto version = get_le<std::uint16_t>(header.data() + 4);
  if (version != kTagFileVersion)
    throw FormatError("tag file: unsupported version " + std::to_string(version), 0);

  TagStream stream;
  stream.channel_count = get_le<std::uint16_t>(header.data() + 6);
  stream.clock_period_ps = get_le<std::uint64_t>(header.data() + 8);
  const auto n = get_le<std::uint64_t>(header.data() + 16);
  if (stream.clock_period_ps == 0) throw FormatError("tag file: clock period is zero", 0);

  std::vector<char> block(kRecordsPerBlock * kTagRecordBytes);
  std::uint64_t done = 0;
  while (done < n) {
    const std::size_t want = static_cast<std::size_t>(std::min<std::uint64_t>(kRecordsPerBlock, n - done));
    in.read(block.data(), static_cast<std::streamsize>(want * kTagRecordBytes));
    const auto got_bytes = static_cast<std::size_t>(in.gcount());
    const std::size_t whole = got_bytes / kTagRecordBytes;
    for (std::size_t i = 0; i < whole; ++i) {
      const char* rec = block.data() + i * kTagRecordBytes;
      stream.tags.push_back({get_le<std::uint64_t>(rec + 1), static_cast<std::uint8_t>(rec[0])});
    }
    if (whole < want) {
      const std::uint64_t at = done + whole;
      throw FormatError("tag file: truncated at record " + std::to_string(at) + " of " + std::to_string(n) +
                            " (byte offset " + std::to_string(kTagFileHeaderBytes + at * kTagRecordBytes) + ")",
                        static_cast<std::size_t>(at));
    }
    done += want;
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("tag file: trailing bytes after record " + std::to_string(n), static_cast<std::size_t>(n));
  stream.validate();
  return stream;
}

TagStream read_tags(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open tag file " + path.string());
  try {
    return read_tags(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.record_index());
  }
}

void write_tags_csv(std::ostream& out, const TagStream& stream) {
  out << "channel,timestamp_ps\n";
  for (const TimeTag& t : stream.tags) out << static_cast<unsigned>(t.channel) << ',' << t.timestamp_ps << '\n';
}

void write_tags_csv(const std::filesystem::path& path, const TagStream& stream) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_tags_csv(out, stream);
}

}  // namespace tofspec::timetag
