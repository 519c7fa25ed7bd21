#include "cxnprobe/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "cxnprobe/error.hpp"
#include "cxnprobe/rng.hpp"

namespace cxnprobe {

FormatError::FormatError(std::string origin, std::size_t line, const std::string& message)
    : Error(line > 0 ? origin + ":" + std::to_string(line) + ": " + message : origin + ": " + message),
      origin_(std::move(origin)),
      line_(line) {}

std::string fold_case(std::string_view utf8) {
  bool ascii = true;
  for (const char c : utf8) {
    if (static_cast<unsigned char>(c) >= 0x80) {
      ascii = false;
      break;
    }
  }
  if (ascii) {
    std::string out(utf8);
    for (char& c : out) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
  }

  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  icu::UnicodeString text = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  text.toLower(icu::Locale::getRoot());
  icu::UnicodeString normalized = nfc->normalize(text, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed for '" + std::string(utf8) + "'");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xfU];
    value >>= 4;
  }
  return out;
}

std::uint64_t parse_hex(std::string_view hex) {
  if (hex.empty() || hex.size() > 16) throw Error("bad hex value '" + std::string(hex) + "'");
  std::uint64_t value = 0;
  for (const char c : hex) {
    value <<= 4;
    if (c >= '0' && c <= '9') {
      value |= static_cast<std::uint64_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      value |= static_cast<std::uint64_t>(c - 'a' + 10);
    } else {
      throw Error("bad hex value '" + std::string(hex) + "'");
    }
  }
  return value;
}

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::uint64_t state = kFnvOffsetBasis;
  char buffer[1 << 14];
  while (in) {
    in.read(buffer, sizeof buffer);
    state = fnv1a64(std::string_view(buffer, static_cast<std::size_t>(in.gcount())), state);
  }
  return state;
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

double SplitMix64::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace cxnprobe
