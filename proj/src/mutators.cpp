#include "predfuzz/mutators.hpp"

#include <algorithm>
#include <stdexcept>

namespace predfuzz {

namespace {

constexpr std::array<std::int64_t, 9> kInteresting8{-128, -1, 0, 1, 16, 32, 64, 100, 127};
constexpr std::array<std::int64_t, 10> kInteresting16{-32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767};
constexpr std::array<std::int64_t, 8> kInteresting32{
    -2147483648LL, -100663046, -32769, 32768, 65535, 65536, 100663045, 2147483647};

std::int64_t interesting_value(std::size_t i)
{
    if (i < kInteresting8.size()) {
        return kInteresting8[i];
    }
    i -= kInteresting8.size();
    if (i < kInteresting16.size()) {
        return kInteresting16[i];
    }
    return kInteresting32[i - kInteresting16.size()];
}

std::size_t width_at(const Bytes& in, std::size_t pos, std::size_t want)
{
    return std::min(want, in.size() - pos);
}

std::uint64_t load_le(const Bytes& in, std::size_t pos, std::size_t w)
{
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < w; ++i) {
        v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    }
    return v;
}

void store_le(Bytes& out, std::size_t pos, std::size_t w, std::uint64_t v)
{
    for (std::size_t i = 0; i < w; ++i) {
        out[pos + i] = static_cast<std::uint8_t>(v >> (8 * i));
    }
}

void arith(Bytes& out, std::size_t pos, std::size_t w, std::size_t outcome)
{
    const std::uint64_t mask = w >= 8 ? ~0ULL : ((1ULL << (8 * w)) - 1);
    const std::uint64_t v = load_le(out, pos, w);
    const std::uint64_t delta = outcome % kArithMax + 1;
    const std::uint64_t r = outcome < kArithMax ? v + delta : v - delta;
    store_le(out, pos, w, r & mask);
}

std::size_t overwrite_span(std::size_t len, std::size_t pos, std::size_t src)
{
    return std::min({kMaxBlockLen, len - pos, len - src});
}

std::size_t duplicate_span(std::size_t len, std::size_t src)
{
    return std::min(kMaxBlockLen, len - src);
}

void truncate_to(Bytes& out, std::size_t max_len)
{
    if (out.size() > max_len) {
        out.resize(max_len);
    }
}

}  // namespace

std::string_view mutator_name(Mutator m)
{
    switch (m) {
    case Mutator::BitFlip1: return "bitflip1";
    case Mutator::BitFlip2: return "bitflip2";
    case Mutator::BitFlip4: return "bitflip4";
    case Mutator::ByteFlip: return "byteflip";
    case Mutator::Arith8Add: return "arith8_add";
    case Mutator::Arith8Sub: return "arith8_sub";
    case Mutator::Arith16: return "arith16";
    case Mutator::Arith32: return "arith32";
    case Mutator::Interesting8: return "interesting8";
    case Mutator::Interesting16: return "interesting16";
    case Mutator::Interesting32: return "interesting32";
    case Mutator::RandomByte: return "random_byte";
    case Mutator::DeleteByte: return "delete_byte";
    case Mutator::InsertByte: return "insert_byte";
    case Mutator::OverwriteBlock: return "overwrite_block";
    case Mutator::DuplicateBlock: return "duplicate_block";
    }
    return "unknown";
}

std::size_t outcome_count(Mutator m, const Bytes& input, std::size_t pos, std::size_t max_len)
{
    (void)max_len;
    if (pos >= input.size()) {
        throw std::invalid_argument("mutator position out of range");
    }
    const std::size_t len = input.size();
    switch (m) {
    case Mutator::BitFlip1: return 8;
    case Mutator::BitFlip2: return 7;
    case Mutator::BitFlip4: return 5;
    case Mutator::ByteFlip: return 1;
    case Mutator::Arith8Add:
    case Mutator::Arith8Sub: return kArithMax;
    case Mutator::Arith16:
    case Mutator::Arith32: return 2 * kArithMax;
    case Mutator::Interesting8: return kInteresting8.size();
    case Mutator::Interesting16: return kInteresting8.size() + kInteresting16.size();
    case Mutator::Interesting32: return kInteresting8.size() + kInteresting16.size() + kInteresting32.size();
    case Mutator::RandomByte: return 256;
    case Mutator::DeleteByte: return 1;
    case Mutator::InsertByte: return 256;
    case Mutator::OverwriteBlock: {
        std::size_t n = 0;
        for (std::size_t src = 0; src < len; ++src) {
            n += overwrite_span(len, pos, src);
        }
        return n;
    }
    case Mutator::DuplicateBlock: {
        std::size_t n = 0;
        for (std::size_t src = 0; src < len; ++src) {
            n += duplicate_span(len, src);
        }
        return n;
    }
    }
    throw std::invalid_argument("unknown mutator");
}

Bytes apply_outcome(Mutator m, const Bytes& input, std::size_t pos, std::size_t outcome, std::size_t max_len)
{
    const std::size_t count = outcome_count(m, input, pos, max_len);
    if (outcome >= count) {
        throw std::invalid_argument("mutator outcome out of range");
    }
    Bytes out = input;
    const std::size_t len = input.size();
    switch (m) {
    case Mutator::BitFlip1: out[pos] ^= static_cast<std::uint8_t>(1u << outcome); break;
    case Mutator::BitFlip2: out[pos] ^= static_cast<std::uint8_t>(0x3u << outcome); break;
    case Mutator::BitFlip4: out[pos] ^= static_cast<std::uint8_t>(0xFu << outcome); break;
    case Mutator::ByteFlip: out[pos] ^= 0xFF; break;
    case Mutator::Arith8Add: out[pos] = static_cast<std::uint8_t>(out[pos] + outcome + 1); break;
    case Mutator::Arith8Sub: out[pos] = static_cast<std::uint8_t>(out[pos] - outcome - 1); break;
    case Mutator::Arith16: arith(out, pos, width_at(input, pos, 2), outcome); break;
    case Mutator::Arith32: arith(out, pos, width_at(input, pos, 4), outcome); break;
    case Mutator::Interesting8:
    case Mutator::Interesting16:
    case Mutator::Interesting32: {
        const std::size_t want = m == Mutator::Interesting8 ? 1 : (m == Mutator::Interesting16 ? 2 : 4);
        store_le(out, pos, width_at(input, pos, want), static_cast<std::uint64_t>(interesting_value(outcome)));
        break;
    }
    case Mutator::RandomByte: out[pos] = static_cast<std::uint8_t>(outcome); break;
    case Mutator::DeleteByte:
        if (len > 1) {
            out.erase(out.begin() + static_cast<std::ptrdiff_t>(pos));
        }
        break;
    case Mutator::InsertByte:
        out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), static_cast<std::uint8_t>(outcome));
        truncate_to(out, max_len);
        break;
    case Mutator::OverwriteBlock: {
        std::size_t rest = outcome;
        for (std::size_t src = 0; src < len; ++src) {
            const std::size_t span = overwrite_span(len, pos, src);
            if (rest < span) {
                const std::size_t n = rest + 1;
                std::copy_n(input.begin() + static_cast<std::ptrdiff_t>(src), n,
                            out.begin() + static_cast<std::ptrdiff_t>(pos));
                break;
            }
            rest -= span;
        }
        break;
    }
    case Mutator::DuplicateBlock: {
        std::size_t rest = outcome;
        for (std::size_t src = 0; src < len; ++src) {
            const std::size_t span = duplicate_span(len, src);
            if (rest < span) {
                const std::size_t n = rest + 1;
                const auto first = input.begin() + static_cast<std::ptrdiff_t>(src);
                out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), first,
                           first + static_cast<std::ptrdiff_t>(n));
                truncate_to(out, max_len);
                break;
            }
            rest -= span;
        }
        break;
    }
    }
    return out;
}

Bytes apply_mutator(Mutator m, const Bytes& input, std::size_t pos, Rng& rng, std::size_t max_len)
{
    const std::size_t count = outcome_count(m, input, pos, max_len);
    return apply_outcome(m, input, pos, static_cast<std::size_t>(rng.below(count)), max_len);
}

}  // namespace predfuzz
