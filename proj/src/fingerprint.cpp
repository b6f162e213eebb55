#include "graphcliff/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>
#include <vector>

namespace graphcliff {

namespace {

constexpr std::uint64_t kFnvSeed = 0xcbf29ce484222325ULL ^ 0x67636c6966660001ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

struct Fnv1a {
  std::uint64_t h = kFnvSeed;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= kFnvPrime;
    }
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void i32(std::int32_t v) { u64(static_cast<std::uint64_t>(static_cast<std::uint32_t>(v))); }
};

int bond_code(BondOrder o) { return static_cast<int>(o); }

}  // namespace

void FpConfig::validate() const {
  if (radius < 0) throw Error("FpConfig: radius must be >= 0");
  if (nbits <= 0 || (nbits & (nbits - 1)) != 0)
    throw Error("FpConfig: nbits must be a positive power of two");
}

std::string Fingerprint::to_hex() const {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(nbits) / 8, 0);
  for (auto b : on_bits) bytes[b / 8] |= static_cast<unsigned char>(1u << (b % 8));
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

Fingerprint ecfp(const Molecule& mol, const FpConfig& cfg) {
  cfg.validate();
  Fingerprint fp;
  fp.nbits = cfg.nbits;
  if (mol.empty()) return fp;

  const std::size_t n = mol.atoms.size();
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Atom& a = mol.atoms[i];
    Fnv1a h;
    h.i32(a.atomic_number);
    h.i32(a.degree);
    h.i32(a.formal_charge);
    h.i32(a.implicit_h);
    h.i32(a.aromatic ? 1 : 0);
    h.i32(a.in_ring ? 1 : 0);
    ids[i] = h.h;
  }

  std::unordered_set<std::uint64_t> all(ids.begin(), ids.end());
  auto adj = mol.adjacency();

  for (int r = 1; r <= cfg.radius; ++r) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::pair<int, std::uint64_t>> nbrs;
      nbrs.reserve(adj[i].size());
      for (auto [v, bi] : adj[i]) nbrs.push_back({bond_code(mol.bonds[bi].order), ids[v]});
      std::sort(nbrs.begin(), nbrs.end());
      Fnv1a h;
      h.i32(r);
      h.u64(ids[i]);
      for (auto& [code, id] : nbrs) {
        h.i32(code);
        h.u64(id);
      }
      next[i] = h.h;
    }
    ids = std::move(next);
    all.insert(ids.begin(), ids.end());
  }

  for (auto id : all)
    fp.on_bits.insert(static_cast<std::uint32_t>(id % static_cast<std::uint64_t>(cfg.nbits)));
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.nbits != b.nbits) throw Error("tanimoto: fingerprint widths differ");
  if (a.on_bits.empty() && b.on_bits.empty()) return 0.0;
  std::size_t inter = 0;
  for (auto bit : a.on_bits) inter += b.on_bits.count(bit);
  const std::size_t uni = a.on_bits.size() + b.on_bits.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::size_t levenshtein_distance(const std::string& a, const std::string& b) {
  const std::size_t m = a.size(), n = b.size();
  if (m == 0) return n;
  if (n == 0) return m;
  std::vector<std::size_t> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

double levenshtein_similarity(const std::string& a, const std::string& b) {
  if (a.empty() && b.empty()) return 1.0;
  const double maxlen = static_cast<double>(std::max(a.size(), b.size()));
  return 1.0 - static_cast<double>(levenshtein_distance(a, b)) / maxlen;
}

bool levenshtein_similarity_exceeds(const std::string& a, const std::string& b,
                                    double threshold) {
  if (a.empty() && b.empty()) return 1.0 > threshold;
  const std::size_t maxlen = std::max(a.size(), b.size());
  // sim > t  <=>  d < (1-t)*maxlen  <=>  d <= ceil((1-t)*maxlen) - 1
  const double bound = (1.0 - threshold) * static_cast<double>(maxlen);
  // strict inequality: largest admissible distance just below `bound`
  std::size_t dmax;
  {
    const double c = std::ceil(bound);
    dmax = (c == bound) ? static_cast<std::size_t>(bound > 0 ? bound - 1 : 0)
                        : static_cast<std::size_t>(c > 0 ? c - 1 : 0);
    if (bound <= 0) return false;
  }
  const std::size_t m = a.size(), n = b.size();
  if ((m > n ? m - n : n - m) > dmax) return false;

  // banded DP: only cells with |i-j| <= dmax can hold a distance <= dmax
  const std::size_t w = dmax;
  const std::size_t inf = dmax + 1;
  std::vector<std::size_t> prev(n + 1, inf), cur(n + 1, inf);
  for (std::size_t j = 0; j <= std::min(n, w); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= m; ++i) {
    const std::size_t lo = i > w ? i - w : 0;
    const std::size_t hi = std::min(n, i + w);
    std::fill(cur.begin(), cur.end(), inf);
    if (lo == 0) cur[0] = i <= inf ? i : inf;
    bool any = cur[0] <= dmax && lo == 0;
    for (std::size_t j = std::max<std::size_t>(lo, 1); j <= hi; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      std::size_t best = sub;
      if (prev[j] + 1 < best) best = prev[j] + 1;
      if (cur[j - 1] + 1 < best) best = cur[j - 1] + 1;
      cur[j] = std::min(best, inf);
      any = any || cur[j] <= dmax;
    }
    if (!any) return false;
    std::swap(prev, cur);
  }
  return prev[n] <= dmax;
}

}  // namespace graphcliff
