#pragma once

#include <cstdint>
#include <cstring>
#include <iosfwd>
#include <string>
#include <vector>

namespace pact::io {

std::uint32_t crc32(const void* data, std::size_t size, std::uint32_t seed = 0);

// Little-endian scalar writers/readers. The host is little-endian in practice;
// these go through memcpy so they are also alias-safe.
void write_bytes(std::ostream& os, const void* p, std::size_t n);
void read_bytes(std::istream& is, void* p, std::size_t n, const std::string& what);

template <typename T>
void write_pod(std::ostream& os, T v) {
    write_bytes(os, &v, sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
    T v{};
    read_bytes(is, &v, sizeof(T), what);
    return v;
}

void write_f32_array(std::ostream& os, const std::vector<double>& v);
std::vector<double> read_f32_array(std::istream& is, std::size_t n, const std::string& what);

// CRC over the f32 image of a double array, matching what write_f32_array emits.
std::uint32_t crc32_f32(const std::vector<double>& v, std::uint32_t seed = 0);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace pact::io
