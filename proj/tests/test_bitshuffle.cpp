#include "onloadrt/bitshuffle.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <vector>

#include "onloadrt/rng.hpp"

using namespace onloadrt;

TEST_CASE("bitshuffle worked example: 4 values at 2 bits", "[bitshuffle]") {
  // values 1,2,3,0 -> plane0 (LSBs) = 0b00000101, plane1 = 0b00000110
  std::vector<uint16_t> q = {1, 2, 3, 0};
  auto planes = bitshuffle(q, 2);
  REQUIRE(planes == std::vector<uint8_t>{0x05, 0x06});
  REQUIRE(bitunshuffle(planes, 2, 4) == q);
}

TEST_CASE("bitshuffle round-trips all widths and ragged lengths", "[bitshuffle]") {
  Rng rng(0xbead);
  for (int bits = 1; bits <= 16; ++bits) {
    for (size_t n : {size_t(1), size_t(7), size_t(8), size_t(9), size_t(63),
                     size_t(64), size_t(65), size_t(1000), size_t(4097)}) {
      std::vector<uint16_t> q(n);
      uint32_t mask = (uint32_t(1) << bits) - 1;
      for (auto& v : q) v = uint16_t(rng.next_u64() & mask);
      auto planes = bitshuffle(q, bits);
      REQUIRE(planes.size() == size_t(bits) * ((n + 7) / 8));
      REQUIRE(bitunshuffle(planes, bits, n) == q);
    }
  }
}

TEST_CASE("bitshuffle pads the final byte of each plane with zeros", "[bitshuffle]") {
  // 9 ones at 1 bit: plane is 2 bytes, second byte only has bit 0 set.
  std::vector<uint16_t> q(9, 1);
  auto planes = bitshuffle(q, 1);
  REQUIRE(planes == std::vector<uint8_t>{0xFF, 0x01});
}

TEST_CASE("bitshuffle groups equal-significance bits together", "[bitshuffle]") {
  // 16 values whose bit 3 is always set and all other bits clear: the MSB
  // plane must be solid 0xFF, all other planes solid zero.
  std::vector<uint16_t> q(16, 8);
  auto planes = bitshuffle(q, 4);
  REQUIRE(planes.size() == 8);
  for (size_t i = 0; i < 6; ++i) REQUIRE(planes[i] == 0);
  REQUIRE(planes[6] == 0xFF);
  REQUIRE(planes[7] == 0xFF);
}

TEST_CASE("bitshuffle validates inputs", "[bitshuffle]") {
  std::vector<uint16_t> q = {3};
  REQUIRE_THROWS_AS(bitshuffle(q, 0), RangeError);
  REQUIRE_THROWS_AS(bitshuffle(q, 17), RangeError);
  REQUIRE_THROWS_AS(bitshuffle(q, 1), ValueOverflow);  // 3 needs 2 bits

  auto planes = bitshuffle(q, 2);
  REQUIRE_THROWS_AS(bitunshuffle(planes, 3, 1), HeaderMismatch);
  planes.push_back(0);
  REQUIRE_THROWS_AS(bitunshuffle(planes, 2, 1), HeaderMismatch);
}
