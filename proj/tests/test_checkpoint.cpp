#include "triggerlab/checkpoint.hpp"

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "triggerlab/net.hpp"
#include "triggerlab/rng.hpp"

using namespace triggerlab;
namespace fs = std::filesystem;

namespace {

class CheckpointTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("triggerlab_ckpt_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    static Architecture small_arch() {
        Architecture a;
        a.in_height = 8;
        a.in_width = 8;
        a.conv1_filters = 4;
        a.conv2_filters = 6;
        a.dense_units = 10;
        return a;
    }

    static std::vector<char> read_bytes(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }

    static void write_bytes(const std::string& p, const std::vector<char>& bytes) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }

    fs::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
    Network<float> net = new_model<float>(small_arch(), 77);
    // make sure unusual values survive: negative zero, subnormal, exact bits
    net.weights[0] = -0.0f;
    net.weights[1] = 1e-42f;
    net.weights[2] = -123.456f;
    save_checkpoint(net, path("m.ckpt"));
    const Network<float> back = load_checkpoint(path("m.ckpt"));
    EXPECT_EQ(back.arch, net.arch);
    ASSERT_EQ(back.weights.size(), net.weights.size());
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        EXPECT_EQ(std::bit_cast<std::uint32_t>(back.weights[i]),
                  std::bit_cast<std::uint32_t>(net.weights[i]))
            << "weight " << i;
    }
}

TEST_F(CheckpointTest, SavedBytesAreDeterministic) {
    const Network<float> net = new_model<float>(small_arch(), 3);
    save_checkpoint(net, path("a.ckpt"));
    save_checkpoint(net, path("b.ckpt"));
    EXPECT_EQ(read_bytes(path("a.ckpt")), read_bytes(path("b.ckpt")));
}

TEST_F(CheckpointTest, HeaderLayout) {
    const Network<float> net = new_model<float>(small_arch(), 5);
    save_checkpoint(net, path("m.ckpt"));
    const std::vector<char> bytes = read_bytes(path("m.ckpt"));
    const std::string desc = net.arch.descriptor();
    ASSERT_EQ(bytes.size(), 8 + 4 + desc.size() + 8 + 4 * net.weights.size());
    EXPECT_EQ(std::string(bytes.data(), 8), "TRIGLAB1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), desc.size());  // little-endian u32
    EXPECT_EQ(bytes[9], 0);
    EXPECT_EQ(std::string(bytes.data() + 12, desc.size()), desc);
}

TEST_F(CheckpointTest, MissingFileIsAnError) {
    EXPECT_THROW(load_checkpoint(path("nope.ckpt")), std::runtime_error);
}

TEST_F(CheckpointTest, BadMagicIsRejected) {
    const Network<float> net = new_model<float>(small_arch(), 6);
    save_checkpoint(net, path("m.ckpt"));
    std::vector<char> bytes = read_bytes(path("m.ckpt"));
    bytes[0] = 'X';
    write_bytes(path("m.ckpt"), bytes);
    try {
        load_checkpoint(path("m.ckpt"));
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
}

TEST_F(CheckpointTest, TruncationsAreRejected) {
    const Network<float> net = new_model<float>(small_arch(), 7);
    save_checkpoint(net, path("m.ckpt"));
    const std::vector<char> bytes = read_bytes(path("m.ckpt"));
    // cut in the magic, the descriptor, and the weight payload
    for (std::size_t keep : {std::size_t{4}, std::size_t{14}, bytes.size() - 1}) {
        write_bytes(path("cut.ckpt"), std::vector<char>(bytes.begin(), bytes.begin() + keep));
        EXPECT_THROW(load_checkpoint(path("cut.ckpt")), std::runtime_error) << "keep " << keep;
    }
}

TEST_F(CheckpointTest, TrailingBytesAreRejected) {
    const Network<float> net = new_model<float>(small_arch(), 8);
    save_checkpoint(net, path("m.ckpt"));
    std::vector<char> bytes = read_bytes(path("m.ckpt"));
    bytes.push_back(0);
    write_bytes(path("m.ckpt"), bytes);
    EXPECT_THROW(load_checkpoint(path("m.ckpt")), std::runtime_error);
}

TEST_F(CheckpointTest, CountMismatchIsRejected) {
    const Network<float> net = new_model<float>(small_arch(), 9);
    save_checkpoint(net, path("m.ckpt"));
    std::vector<char> bytes = read_bytes(path("m.ckpt"));
    const std::size_t count_off = 8 + 4 + net.arch.descriptor().size();
    bytes[count_off] = static_cast<char>(static_cast<unsigned char>(bytes[count_off]) + 1);
    write_bytes(path("m.ckpt"), bytes);
    try {
        load_checkpoint(path("m.ckpt"));
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("count"), std::string::npos);
    }
}

TEST_F(CheckpointTest, UnknownDescriptorIsRejected) {
    const Network<float> net = new_model<float>(small_arch(), 10);
    save_checkpoint(net, path("m.ckpt"));
    std::vector<char> bytes = read_bytes(path("m.ckpt"));
    bytes[12] = 'b';  // first descriptor byte: "smallcnn ..." -> "bmallcnn ..."
    write_bytes(path("m.ckpt"), bytes);
    EXPECT_THROW(load_checkpoint(path("m.ckpt")), std::invalid_argument);
}

}  // namespace
