#include <doctest.h>

#include <cmath>
#include <set>

#include "pathbench/rng.hpp"
#include "pathbench/sha256.hpp"

using pathbench::Rng;

TEST_CASE("splitmix64 stream matches published reference vectors") {
    Rng a(0);
    CHECK(a.next_u64() == 0xE220A8397B1DCDAFULL);
    CHECK(a.next_u64() == 0x6E789E6AA1B965F4ULL);
    CHECK(a.next_u64() == 0x06C45D188009454FULL);

    Rng b(0x0123456789ABCDEFULL);
    CHECK(b.next_u64() == 0x157A3807A48FAA9DULL);
    CHECK(b.next_u64() == 0xD573529B34A1D093ULL);
    CHECK(b.next_u64() == 0x2F90B72E996DCCBEULL);
}

TEST_CASE("identical seeds give identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform stays in [0,1) and spans the range") {
    Rng rng(7);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("below(n) is always < n") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) CHECK(rng.below(17) < 17);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 200; ++i) seen.insert(rng.below(5));
    CHECK(seen.size() == 5);
}

TEST_CASE("normal draws have roughly standard moments") {
    Rng rng(11);
    const int n = 20000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("normal(mean, stddev) scales and shifts") {
    Rng a(5), b(5);
    const double z = a.normal();
    CHECK(b.normal(10.0, 2.0) == doctest::Approx(10.0 + 2.0 * z).epsilon(1e-12));
}

TEST_CASE("forked streams are decorrelated and order-free") {
    Rng base(99);
    Rng c0 = base.fork(0);
    Rng c1 = base.fork(1);
    CHECK(c0.next_u64() != c1.next_u64());
    // forking again from the untouched base gives the same children
    Rng c0_again = base.fork(0);
    Rng fresh = base.fork(0);
    CHECK(c0_again.next_u64() == fresh.next_u64());
}

TEST_CASE("shuffle is deterministic per seed and permutes") {
    std::vector<int> v1 = {1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> v2 = v1;
    std::vector<int> sorted = v1;
    Rng a(123), b(123);
    a.shuffle(v1);
    b.shuffle(v2);
    CHECK(v1 == v2);
    std::sort(v2.begin(), v2.end());
    CHECK(v2 == sorted);
}

TEST_CASE("sha256 matches FIPS test vectors") {
    using pathbench::Sha256;
    CHECK(Sha256::hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(Sha256::hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(Sha256::hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    // streaming across block boundaries
    Sha256 h;
    const std::string million(1000000, 'a');
    for (std::size_t i = 0; i < million.size(); i += 9973)
        h.update(million.substr(i, 9973));
    CHECK(pathbench::to_hex(h.digest()) ==
          "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}
