#include "triggerlab/net.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "triggerlab/image.hpp"
#include "triggerlab/rng.hpp"

using namespace triggerlab;

namespace {

Architecture tiny_arch() {
    Architecture a;
    a.in_channels = 1;
    a.in_height = 4;
    a.in_width = 4;
    a.num_classes = 2;
    a.conv1_filters = 3;
    a.conv2_filters = 4;
    a.dense_units = 5;
    return a;
}

Image random_image(int channels, int h, int w, Rng& rng) {
    Image img = Image::zeros(channels, h, w);
    for (std::uint8_t& p : img.pixels) p = static_cast<std::uint8_t>(20 + rng.below(211));
    return img;
}

LabeledDataset toy_dataset(const Architecture& a, std::size_t n, std::uint64_t seed) {
    LabeledDataset ds;
    ds.num_classes = a.num_classes;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i)
        ds.push_back(random_image(a.in_channels, a.in_height, a.in_width, rng),
                     static_cast<int>(rng.below(a.num_classes)));
    return ds;
}

TEST(Architecture, ValidatesShapeConstraints) {
    EXPECT_NO_THROW(Architecture{}.validate());
    Architecture a = tiny_arch();
    EXPECT_NO_THROW(a.validate());
    a.in_channels = 2;
    EXPECT_THROW(a.validate(), std::invalid_argument);
    a = tiny_arch();
    a.in_height = 6;
    EXPECT_THROW(a.validate(), std::invalid_argument);
    a = tiny_arch();
    a.num_classes = 1;
    EXPECT_THROW(a.validate(), std::invalid_argument);
    a = tiny_arch();
    a.conv1_filters = 0;
    EXPECT_THROW(a.validate(), std::invalid_argument);
}

TEST(Architecture, DerivedSizes) {
    const Architecture a;  // 1x28x28, 32/64 filters, 128 dense, 10 classes
    EXPECT_EQ(a.pool1_h(), 14);
    EXPECT_EQ(a.pool2_h(), 7);
    EXPECT_EQ(a.flat_size(), 64 * 7 * 7);
    const ParamLayout lay(a);
    EXPECT_EQ(lay.total, 32u * 9 + 32 + 64u * 32 * 9 + 64 + 128u * 3136 + 128 + 10u * 128 + 10);
}

TEST(Architecture, DescriptorRoundTrips) {
    for (const Architecture& a : {Architecture{}, tiny_arch()}) {
        EXPECT_EQ(parse_architecture(a.descriptor()), a);
    }
    EXPECT_EQ(Architecture{}.descriptor(), "smallcnn in=1x28x28 conv=32,64 dense=128 classes=10");
    EXPECT_THROW(parse_architecture("smallcnn in=1x28 conv=32,64 dense=128 classes=10"),
                 std::invalid_argument);
    EXPECT_THROW(parse_architecture("bignet in=1x28x28 conv=32,64 dense=128 classes=10"),
                 std::invalid_argument);
    EXPECT_THROW(parse_architecture(""), std::invalid_argument);
    // parses, but violates the shape constraints
    EXPECT_THROW(parse_architecture("smallcnn in=2x28x28 conv=32,64 dense=128 classes=10"),
                 std::invalid_argument);
}

TEST(NewModel, ZeroBiasesAndFanInBoundedWeights) {
    const Architecture a = tiny_arch();
    const Network<double> net = new_model<double>(a, 5);
    const ParamLayout lay(a);
    ASSERT_EQ(net.weights.size(), lay.total);

    auto check_layer = [&](std::size_t w_off, std::size_t w_count, int fan_in, std::size_t b_off,
                           std::size_t b_count) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        bool any_nonzero = false;
        for (std::size_t i = 0; i < w_count; ++i) {
            EXPECT_GE(net.weights[w_off + i], -bound);
            EXPECT_LT(net.weights[w_off + i], bound);
            any_nonzero |= net.weights[w_off + i] != 0.0;
        }
        EXPECT_TRUE(any_nonzero);
        for (std::size_t i = 0; i < b_count; ++i) EXPECT_EQ(net.weights[b_off + i], 0.0);
    };
    check_layer(lay.conv1_w, 3u * 9, 9, lay.conv1_b, 3);
    check_layer(lay.conv2_w, 4u * 3 * 9, 27, lay.conv2_b, 4);
    check_layer(lay.fc1_w, 5u * 4, 4, lay.fc1_b, 5);
    check_layer(lay.fc2_w, 2u * 5, 5, lay.fc2_b, 2);

    // weights are drawn in storage order from the seed's stream
    Rng rng(5);
    EXPECT_EQ(net.weights[0], rng.uniform(-1.0 / 3.0, 1.0 / 3.0));
    EXPECT_EQ(net.weights[1], rng.uniform(-1.0 / 3.0, 1.0 / 3.0));
}

TEST(NewModel, SeedControlsTheDraw) {
    const Architecture a = tiny_arch();
    EXPECT_EQ(new_model<float>(a, 7).weights, new_model<float>(a, 7).weights);
    EXPECT_NE(new_model<float>(a, 7).weights, new_model<float>(a, 8).weights);
}

TEST(Forward, ZeroModelGivesZeroLogitsAndUniformLoss) {
    const Architecture a = tiny_arch();
    Network<double> net;
    net.arch = a;
    net.weights.assign(ParamLayout(a).total, 0.0);
    Rng rng(1);
    const Image x = random_image(1, 4, 4, rng);
    for (double logit : forward(net, x)) EXPECT_EQ(logit, 0.0);

    const auto [loss, grads] = loss_and_grads(net, {x, x, x}, {0, 1, 0});
    EXPECT_NEAR(loss, std::log(2.0), 1e-12);

    Architecture ten = tiny_arch();
    ten.num_classes = 10;
    Network<double> net10;
    net10.arch = ten;
    net10.weights.assign(ParamLayout(ten).total, 0.0);
    const auto [loss10, grads10] = loss_and_grads(net10, {x}, {3});
    EXPECT_NEAR(loss10, std::log(10.0), 1e-12);
}

// Identity convolutions (centre tap 1) turn the stack into a global max over
// the input, so every layer's wiring is checkable by hand.
TEST(Forward, HandComputedPipelineOracle) {
    Architecture a = tiny_arch();
    a.conv1_filters = 1;
    a.conv2_filters = 1;
    a.dense_units = 1;
    a.num_classes = 2;
    Network<double> net;
    net.arch = a;
    const ParamLayout lay(a);
    net.weights.assign(lay.total, 0.0);
    net.weights[lay.conv1_w + 4] = 1.0;  // 3x3 centre
    net.weights[lay.conv2_w + 4] = 1.0;
    net.weights[lay.fc1_w] = 2.0;
    net.weights[lay.fc1_b] = 0.5;
    net.weights[lay.fc2_w + 0] = 1.0;
    net.weights[lay.fc2_w + 1] = -1.0;
    net.weights[lay.fc2_b + 0] = 0.25;
    net.weights[lay.fc2_b + 1] = -0.25;

    Image x = Image::zeros(1, 4, 4);
    x.at(0, 1, 2) = 200;
    x.at(0, 0, 0) = 31;
    x.at(0, 3, 3) = 90;
    const double m = 200.0 / 255.0;
    const std::vector<double> logits = forward(net, x);
    ASSERT_EQ(logits.size(), 2u);
    EXPECT_NEAR(logits[0], (2.0 * m + 0.5) + 0.25, 1e-12);
    EXPECT_NEAR(logits[1], -(2.0 * m + 0.5) - 0.25, 1e-12);
}

TEST(Forward, InputsAreScaledBy255) {
    const Architecture a = tiny_arch();
    Workspace<float> ws(a, 2);
    Image x = Image::zeros(1, 4, 4);
    x.at(0, 0, 0) = 255;
    x.at(0, 2, 1) = 51;
    ws.set_input(1, x);
    EXPECT_EQ(ws.xbuf[ws.input_size() + 0], 1.0f);
    EXPECT_EQ(ws.xbuf[ws.input_size() + 2 * 4 + 1], 51.0f / 255.0f);
    EXPECT_THROW(ws.set_input(0, Image::zeros(1, 8, 8)), std::invalid_argument);
}

TEST(Forward, WorkspaceMustMatchModel) {
    const Network<float> net = new_model<float>(tiny_arch(), 3);
    Workspace<float> wrong(Architecture{}, 1);
    Rng rng(2);
    const Image x = random_image(1, 4, 4, rng);
    EXPECT_THROW(forward(net, x, &wrong), std::invalid_argument);
}

TEST(MaxPool, TiesGoToTheFirstInScanOrder) {
    // 2x2 blocks laid out in a 1-channel 4x4 plane
    const float in[16] = {5, 5, 5, 1, 5, 5, 5, 5,    // block A all-equal, block B max twice
                          0, 2, 9, 9, 2, 0, 9, 9};   // block C, block D all 9
    float out[4];
    std::uint8_t idx[4];
    detail::maxpool2x2(in, 1, 4, 4, out, idx);
    EXPECT_EQ(out[0], 5);
    EXPECT_EQ(idx[0], 0);  // scan order: (0,0),(0,1),(1,0),(1,1)
    EXPECT_EQ(out[1], 5);
    EXPECT_EQ(idx[1], 0);
    EXPECT_EQ(out[2], 2);
    EXPECT_EQ(idx[2], 1);
    EXPECT_EQ(out[3], 9);
    EXPECT_EQ(idx[3], 0);
}

TEST(Im2col, MatchesDefinitionWithZeroPadding) {
    Rng rng(3);
    const int C = 2, H = 5, W = 4;
    std::vector<float> in(C * H * W);
    for (float& v : in) v = static_cast<float>(rng.below(100));
    std::vector<float> col(static_cast<std::size_t>(C) * 9 * H * W);
    detail::im2col3x3(in.data(), C, H, W, col.data());
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        const int sy = y + ky - 1, sx = x + kx - 1;
                        const float expect =
                            (sy >= 0 && sy < H && sx >= 0 && sx < W)
                                ? in[(static_cast<std::size_t>(c) * H + sy) * W + sx]
                                : 0.0f;
                        EXPECT_EQ(col[((static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * H + y) * W + x],
                                  expect);
                    }
}

TEST(Loss, SoftmaxProbabilitiesSumToOne) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 11);
    Workspace<float> ws(a, 8);
    Rng rng(12);
    std::vector<int> labels(8);
    for (int i = 0; i < 8; ++i) {
        ws.set_input(i, random_image(1, 4, 4, rng));
        labels[i] = static_cast<int>(rng.below(2));
    }
    std::vector<float> grads(net.weights.size(), 0.0f);
    loss_and_backward(net, ws, labels.data(), 8, grads);
    for (int i = 0; i < 8; ++i) {
        double sum = 0.0;
        for (int k = 0; k < 2; ++k) sum += ws.probs[i * 2 + k];
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(Loss, RejectsBadBatches) {
    const Network<float> net = new_model<float>(tiny_arch(), 1);
    Rng rng(4);
    const Image x = random_image(1, 4, 4, rng);
    EXPECT_THROW(loss_and_grads(net, {}, {}), std::invalid_argument);
    EXPECT_THROW(loss_and_grads(net, {x}, {0, 1}), std::invalid_argument);
    EXPECT_THROW(loss_and_grads(net, {x}, {2}), std::invalid_argument);
    EXPECT_THROW(loss_and_grads(net, {x}, {-1}), std::invalid_argument);
}

// Every parameter is probed against a central difference at h = 1e-4 in a
// double-precision network; relative error tolerance 1e-3.
TEST(Gradcheck, AnalyticGradientsMatchCentralDifferences) {
    const Architecture a = tiny_arch();
    Network<double> net = new_model<double>(a, 17);
    Rng rng(18);
    std::vector<Image> batch;
    std::vector<int> labels;
    for (int i = 0; i < 3; ++i) {
        batch.push_back(random_image(1, 4, 4, rng));
        labels.push_back(static_cast<int>(rng.below(2)));
    }

    const auto [loss, grads] = loss_and_grads(net, batch, labels);
    ASSERT_TRUE(std::isfinite(loss));

    const double h = 1e-4;
    int probes = 0;
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        const double keep = net.weights[i];
        net.weights[i] = keep + h;
        const double up = loss_and_grads(net, batch, labels).first;
        net.weights[i] = keep - h;
        const double down = loss_and_grads(net, batch, labels).first;
        net.weights[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double rel =
            std::abs(fd - grads[i]) / std::max({1e-6, std::abs(fd), std::abs(grads[i])});
        EXPECT_LE(rel, 1e-3) << "param " << i << " analytic " << grads[i] << " fd " << fd;
        ++probes;
    }
    EXPECT_GE(probes, 100);
}

TEST(Gradcheck, SingleStepAtSmallLrDecreasesLoss) {
    const Architecture a = tiny_arch();
    Network<double> net = new_model<double>(a, 21);
    Rng rng(22);
    std::vector<Image> batch;
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) {
        batch.push_back(random_image(1, 4, 4, rng));
        labels.push_back(static_cast<int>(rng.below(2)));
    }
    const auto [before, grads] = loss_and_grads(net, batch, labels);
    for (std::size_t i = 0; i < net.weights.size(); ++i) net.weights[i] -= 1e-3 * grads[i];
    const double after = loss_and_grads(net, batch, labels).first;
    EXPECT_LT(after, before);
}

// Duplicating an item leaves the mean loss and gradient unchanged.
TEST(Gradcheck, DuplicatedItemBatchMatchesSingle) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 23);
    Rng rng(24);
    const Image x = random_image(1, 4, 4, rng);
    const auto [loss1, grads1] = loss_and_grads(net, {x}, {1});
    const auto [loss2, grads2] = loss_and_grads(net, {x, x}, {1, 1});
    EXPECT_NEAR(loss2, loss1, 1e-12);
    ASSERT_EQ(grads1.size(), grads2.size());
    for (std::size_t i = 0; i < grads1.size(); ++i)
        EXPECT_NEAR(grads2[i], grads1[i], 1e-6f) << "param " << i;
}

TEST(ForwardBatch, BitIdenticalToSingleImageCalls) {
    Architecture a = tiny_arch();
    a.in_height = 8;
    a.in_width = 8;
    a.num_classes = 10;
    const Network<float> net = new_model<float>(a, 29);
    Rng rng(30);
    std::vector<Image> images;
    for (int i = 0; i < 10; ++i) images.push_back(random_image(1, 8, 8, rng));

    Workspace<float> batch_ws(a, 10);
    for (int i = 0; i < 10; ++i) batch_ws.set_input(i, images[i]);
    forward_batch(net, batch_ws, 10);

    Workspace<float> single_ws(a, 1);
    for (int i = 0; i < 10; ++i) {
        const std::vector<float> single = forward(net, images[i], &single_ws);
        for (int k = 0; k < 10; ++k)
            EXPECT_EQ(batch_ws.logits[static_cast<std::size_t>(i) * 10 + k], single[k])
                << "image " << i << " logit " << k;
    }
}

TEST(Train, RejectsBadConfigurations) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 31);
    const LabeledDataset data = toy_dataset(a, 10, 32);

    TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_THROW(train(net, data, cfg), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    EXPECT_THROW(train(net, data, cfg), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.momentum = 1.0;
    EXPECT_THROW(train(net, data, cfg), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    EXPECT_THROW(train(net, data, cfg), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.batch_size = 11;
    EXPECT_THROW(train(net, data, cfg), std::invalid_argument);

    EXPECT_THROW(train(net, LabeledDataset{}, TrainConfig{}), std::runtime_error);

    LabeledDataset wide = data;
    wide.num_classes = 4;
    wide.labels[3] = 3;  // valid for the dataset, outside the 2-class model
    TrainConfig small;
    small.epochs = 1;
    small.batch_size = 2;
    EXPECT_THROW(train(net, wide, small), std::invalid_argument);
}

TEST(Train, DeterministicAndSeedSensitive) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 41);
    const LabeledDataset data = toy_dataset(a, 24, 42);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 7;

    TrainLog log1, log2;
    const Network<float> m1 = train(net, data, cfg, &log1);
    const Network<float> m2 = train(net, data, cfg, &log2);
    EXPECT_EQ(m1.weights, m2.weights);
    EXPECT_EQ(log1.epoch_mean_loss, log2.epoch_mean_loss);
    ASSERT_EQ(log1.epoch_mean_loss.size(), 3u);

    cfg.seed = 8;
    EXPECT_NE(train(net, data, cfg).weights, m1.weights);
}

TEST(Train, MemorizesASingleItem) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 51);
    LabeledDataset data;
    data.num_classes = 2;
    Rng rng(52);
    data.push_back(random_image(1, 4, 4, rng), 1);

    TrainConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.momentum = 0.0;
    cfg.epochs = 200;
    cfg.batch_size = 1;
    TrainLog log;
    const Network<float> fit = train(net, data, cfg, &log);
    EXPECT_LT(log.epoch_mean_loss.back(), 0.01);
    const std::vector<float> logits = forward(fit, data.images[0]);
    EXPECT_GT(logits[1], logits[0]);
}

TEST(Train, LearnsASeparableToyProblem) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 61);
    LabeledDataset data;
    data.num_classes = 2;
    Rng rng(62);
    for (int i = 0; i < 20; ++i) {
        const int label = i % 2;
        Image img = Image::filled(1, 4, 4, label ? 200 : 40);
        img.at(0, rng.below(4), rng.below(4)) = static_cast<std::uint8_t>(label ? 170 : 70);
        data.push_back(std::move(img), label);
    }
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 4;
    TrainLog log;
    const Network<float> fit = train(net, data, cfg, &log);
    EXPECT_LT(log.epoch_mean_loss.back(), log.epoch_mean_loss.front());
    int correct = 0;
    Workspace<float> ws(a, 1);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::vector<float> logits = forward(fit, data.images[i], &ws);
        correct += (logits[1] > logits[0]) == (data.labels[i] == 1);
    }
    EXPECT_EQ(correct, 20);
}

TEST(Train, DivergenceIsReportedWithEpochAndBatch) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 71);
    const LabeledDataset data = toy_dataset(a, 8, 72);
    TrainConfig cfg;
    cfg.learning_rate = 1e20;
    cfg.epochs = 5;
    cfg.batch_size = 4;
    try {
        train(net, data, cfg);
        FAIL() << "expected divergence";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("diverged"), std::string::npos);
        EXPECT_NE(msg.find("epoch"), std::string::npos);
        EXPECT_NE(msg.find("batch"), std::string::npos);
    }
}

// The enhanced loop with an identity-only domain must replay plain training
// exactly: same shuffles, no transform draws, bit-identical weights.
TEST(TrainEnhanced, IdentityDomainReducesToPlainTraining) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 81);
    const LabeledDataset poisoned = toy_dataset(a, 6, 82);
    const LabeledDataset benign = toy_dataset(a, 18, 83);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 5;
    cfg.seed = 99;

    const Network<float> enhanced =
        train_enhanced(net, poisoned, benign, TransformDomain{0, false}, cfg);
    const Network<float> plain = train(net, concat(poisoned, benign), cfg);
    EXPECT_EQ(enhanced.weights, plain.weights);
}

TEST(TrainEnhanced, EmptyPoisonedPartEqualsPlainTraining) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 91);
    const LabeledDataset benign = toy_dataset(a, 16, 92);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 5;
    const Network<float> enhanced =
        train_enhanced(net, LabeledDataset{}, benign, TransformDomain{2, true}, cfg);
    EXPECT_EQ(enhanced.weights, train(net, benign, cfg).weights);
}

TEST(TrainEnhanced, TransformDrawsChangeTheTrajectory) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 95);
    const LabeledDataset poisoned = toy_dataset(a, 8, 96);
    const LabeledDataset benign = toy_dataset(a, 8, 97);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 6;
    const Network<float> with_flip =
        train_enhanced(net, poisoned, benign, TransformDomain{0, true}, cfg);
    const Network<float> without =
        train_enhanced(net, poisoned, benign, TransformDomain{0, false}, cfg);
    EXPECT_NE(with_flip.weights, without.weights);
    // deterministic given the same domain
    EXPECT_EQ(train_enhanced(net, poisoned, benign, TransformDomain{0, true}, cfg).weights,
              with_flip.weights);
}

TEST(TrainEnhanced, RejectsOversizedDomain) {
    const Architecture a = tiny_arch();
    const Network<float> net = new_model<float>(a, 98);
    const LabeledDataset benign = toy_dataset(a, 8, 99);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    EXPECT_THROW(train_enhanced(net, LabeledDataset{}, benign, TransformDomain{4, false}, cfg),
                 std::invalid_argument);
}

}  // namespace
