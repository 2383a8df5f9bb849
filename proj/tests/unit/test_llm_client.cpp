#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "../support/oracles.hpp"
#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"
#include "attnvpr/llm_client.hpp"

using namespace attnvpr;
using attnvpr::testing::TempDir;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an attnvpr::Error";
  return ErrorCode::InvalidArgument;
}

RgbImage checker(std::uint32_t w, std::uint32_t h) {
  RgbImage img{w, h, std::vector<std::uint8_t>(std::size_t{w} * h * 3)};
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      auto* p = img.at(x, y);
      p[0] = static_cast<std::uint8_t>(x * 7);
      p[1] = static_cast<std::uint8_t>(y * 3);
      p[2] = static_cast<std::uint8_t>((x + y) % 2 ? 200 : 17);
    }
  }
  return img;
}

std::string chat_reply(const std::string& text) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

// Scripted chat-completions endpoint on a random local port.
class MockEndpoint {
 public:
  using Script = std::function<std::pair<int, std::string>(std::size_t call)>;

  explicit MockEndpoint(Script script, std::chrono::milliseconds latency = {})
      : script_(std::move(script)), latency_(latency) {
    server_.new_task_queue = [] { return new httplib::ThreadPool(16); };
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      int seen = peak_.load();
      while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
      }
      std::size_t call;
      {
        std::lock_guard lock(mu_);
        call = times_.size();
        times_.push_back(std::chrono::steady_clock::now());
        bodies_.push_back(req.body);
        auth_ = req.get_header_value("Authorization");
      }
      if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
      const auto [status, body] = script_(call);
      res.status = status;
      res.set_content(body, "application/json");
      --in_flight_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  int peak_in_flight() const { return peak_.load(); }
  std::vector<std::chrono::steady_clock::time_point> times() {
    std::lock_guard lock(mu_);
    return times_;
  }
  std::vector<std::string> bodies() {
    std::lock_guard lock(mu_);
    return bodies_;
  }
  std::string auth() {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  Script script_;
  std::chrono::milliseconds latency_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  std::mutex mu_;
  std::vector<std::chrono::steady_clock::time_point> times_;
  std::vector<std::string> bodies_;
  std::string auth_;
};

ProviderConfig http_config(const std::string& url, unsigned retries, double backoff_s) {
  HttpProvider http;
  http.endpoint_url = url;
  http.model = "test-model";
  http.api_key_env = "ATTNVPR_TEST_KEY";
  http.timeout_s = 5.0;
  http.max_retries = retries;
  http.backoff_initial_s = backoff_s;
  http.backoff_multiplier = 2.0;
  return ProviderConfig{http, 4};
}

constexpr const char* kValid = R"([{"center":[0.3,0.4],"weight":1.5,"reasoning":"tower"}])";

class HttpTest : public ::testing::Test {
 protected:
  void SetUp() override { setenv("ATTNVPR_TEST_KEY", "secret-token", 1); }
  void TearDown() override { unsetenv("ATTNVPR_TEST_KEY"); }
};

}  // namespace

TEST(Prompt, CitySubstitution) {
  const std::string p = build_prompt("San Francisco");
  EXPECT_NE(p.find("The city is San Francisco"), std::string::npos);
  EXPECT_EQ(p.find("{city}"), std::string::npos);
  EXPECT_NE(build_prompt("Hong Kong").find("The city is Hong Kong"), std::string::npos);
  EXPECT_EQ(code_of([] { build_prompt(""); }), ErrorCode::EmptyCity);
  EXPECT_EQ(code_of([] { build_prompt("   "); }), ErrorCode::EmptyCity);
}

TEST(AxisImage, FramePreservedAndGeometry) {
  const RgbImage img = checker(100, 100);
  const AnnotatedImage a = compose_axis_image(img);
  EXPECT_EQ(a.canvas.width, 140u);
  EXPECT_EQ(a.canvas.height, 140u);
  EXPECT_EQ(a.crop_original().pixels, img.pixels);
  EXPECT_DOUBLE_EQ(a.x_pixel(0.5), 90.0);
  EXPECT_DOUBLE_EQ(a.y_pixel(0.0), 40.0);

  // Ink was drawn somewhere in the margin (ticks and labels).
  std::size_t dark = 0;
  for (std::uint32_t y = 0; y < 40; ++y) {
    for (std::uint32_t x = 0; x < a.canvas.width; ++x) dark += a.canvas.at(x, y)[0] == 0;
  }
  EXPECT_GT(dark, 50u);
  // Ticks every 0.2: the x=0.4 tick sits at column 80 directly above the frame.
  EXPECT_DOUBLE_EQ(a.x_pixel(0.4), 80.0);
  for (std::uint32_t y = 35; y <= 38; ++y) EXPECT_EQ(a.canvas.at(80, y)[0], 0) << y;
  EXPECT_EQ(a.canvas.at(90, 37)[0], 255);
}

TEST(AxisImage, DegenerateAndLargeImages) {
  const RgbImage one = checker(1, 1);
  const AnnotatedImage a = compose_axis_image(one);
  EXPECT_EQ(a.canvas.width, 41u);
  EXPECT_EQ(a.crop_original().pixels, one.pixels);
  const RgbImage big = checker(320, 240);
  EXPECT_EQ(compose_axis_image(big).crop_original().pixels, big.pixels);
}

TEST(AxisImage, PngRoundTripViaOpenCv) {
  TempDir dir("png");
  const RgbImage img = checker(13, 9);
  atomic_write(dir / "a.png", encode_png(img));
  EXPECT_EQ(load_image(dir / "a.png").pixels, img.pixels);
}

TEST(Provider, Parsing) {
  EXPECT_TRUE(std::holds_alternative<FixtureProvider>(parse_provider("fixture:/tmp/x").kind));
  const auto h = parse_provider("http:https://api.example/v1/chat", "m");
  EXPECT_EQ(std::get<HttpProvider>(h.kind).endpoint_url, "https://api.example/v1/chat");
  EXPECT_EQ(code_of([] { parse_provider("ftp://x"); }), ErrorCode::InvalidArgument);
  ProviderConfig bad = http_config("http://x/", 6, 1.0);
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::InvalidArgument);
}

TEST(FixtureProvider, PassthroughAndMissing) {
  TempDir dir("fixture");
  atomic_write(dir / "q1.attn.json", "None");
  atomic_write(dir / "q2.attn.json", kValid);
  const ProviderConfig cfg{FixtureProvider{dir.path()}, 2};
  EXPECT_TRUE(request_attention("q1", nullptr, "San Francisco", cfg).spec.is_single_landmark());
  const auto r = request_attention("q2", nullptr, "San Francisco", cfg);
  EXPECT_EQ(r.spec.points().size(), 1u);
  EXPECT_EQ(r.retries, 0u);
  EXPECT_EQ(code_of([&] { request_attention("q9", nullptr, "San Francisco", cfg); }), ErrorCode::FixtureMissing);

  const auto a = request_attention_batch({{"q1", {}}, {"q2", {}}}, "SF", cfg);
  const auto b = request_attention_batch({{"q1", {}}, {"q2", {}}}, "SF", cfg);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[1].raw_response, b[1].raw_response);
  EXPECT_EQ(format_attention_spec(a[1].spec), format_attention_spec(b[1].spec));
}

TEST_F(HttpTest, MalformedTwiceThenValidRecordsTwoRetries) {
  MockEndpoint server([](std::size_t call) {
    return std::pair{200, chat_reply(call < 2 ? "I think the tower is notable." : kValid)};
  });
  TempDir cache("cache");
  const RgbImage img = checker(20, 10);
  const auto r = request_attention("q1", &img, "San Francisco", http_config(server.url(), 3, 0.01),
                                   RequestOptions{cache.path(), false});
  EXPECT_EQ(r.retries, 2u);
  ASSERT_EQ(r.spec.points().size(), 1u);
  EXPECT_EQ(read_file(cache / "q1.attn.json"), kValid);
  EXPECT_EQ(server.auth(), "Bearer secret-token");

  const auto body = nlohmann::json::parse(server.bodies().at(0));
  EXPECT_EQ(body["model"], "test-model");
  const auto& content = body["messages"][0]["content"];
  EXPECT_NE(content[0]["text"].get<std::string>().find("The city is San Francisco"), std::string::npos);
  EXPECT_EQ(content[1]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0), 0u);
}

TEST_F(HttpTest, ExponentialBackoffBetweenRetries) {
  MockEndpoint server([](std::size_t call) { return std::pair{200, chat_reply(call < 3 ? "garbage" : kValid)}; });
  const RgbImage img = checker(4, 4);
  const auto r = request_attention("q", &img, "SF", http_config(server.url(), 3, 0.05));
  EXPECT_EQ(r.retries, 3u);
  const auto t = server.times();
  ASSERT_EQ(t.size(), 4u);
  using ms = std::chrono::duration<double, std::milli>;
  const double gaps[] = {ms(t[1] - t[0]).count(), ms(t[2] - t[1]).count(), ms(t[3] - t[2]).count()};
  EXPECT_GE(gaps[0], 50.0);
  EXPECT_GE(gaps[1], 100.0);
  EXPECT_GE(gaps[2], 200.0);
  EXPECT_GT(gaps[2], gaps[1]);
  EXPECT_GT(gaps[1], gaps[0]);
}

TEST_F(HttpTest, ExhaustedRetriesAndUnavailable) {
  MockEndpoint garbage([](std::size_t) { return std::pair{200, chat_reply("no idea")}; });
  const RgbImage img = checker(4, 4);
  EXPECT_EQ(code_of([&] { request_attention("q", &img, "SF", http_config(garbage.url(), 1, 0.01)); }),
            ErrorCode::ExhaustedRetries);

  MockEndpoint down([](std::size_t) { return std::pair{503, std::string("{}")}; });
  EXPECT_EQ(code_of([&] { request_attention("q", &img, "SF", http_config(down.url(), 1, 0.01)); }),
            ErrorCode::ProviderUnavailable);
  EXPECT_EQ(down.times().size(), 2u);

  MockEndpoint forbidden([](std::size_t) { return std::pair{403, std::string("{}")}; });
  EXPECT_EQ(code_of([&] { request_attention("q", &img, "SF", http_config(forbidden.url(), 3, 0.01)); }),
            ErrorCode::ProviderUnavailable);
  EXPECT_EQ(forbidden.times().size(), 1u);

  unsetenv("ATTNVPR_TEST_KEY");
  EXPECT_EQ(code_of([&] { request_attention("q", &img, "SF", http_config(garbage.url(), 1, 0.01)); }),
            ErrorCode::ProviderUnavailable);
}

TEST_F(HttpTest, TransientErrorThenSuccess) {
  MockEndpoint server([](std::size_t call) {
    return call == 0 ? std::pair{429, std::string("{}")} : std::pair{200, chat_reply("None")};
  });
  const RgbImage img = checker(4, 4);
  EXPECT_TRUE(request_attention("q", &img, "SF", http_config(server.url(), 2, 0.01)).spec.is_single_landmark());
}

TEST_F(HttpTest, BatchNeverExceedsMaxConcurrent) {
  MockEndpoint server([](std::size_t) { return std::pair{200, chat_reply(kValid)}; },
                      std::chrono::milliseconds(60));
  TempDir dir("batch");
  atomic_write(dir / "img.png", encode_png(checker(8, 8)));
  std::vector<AttentionRequest> reqs;
  for (int i = 0; i < 12; ++i) reqs.push_back({"q" + std::to_string(i), dir / "img.png"});
  ProviderConfig cfg = http_config(server.url(), 0, 0.01);
  cfg.max_concurrent = 3;
  const auto results = request_attention_batch(reqs, "SF", cfg);
  ASSERT_EQ(results.size(), 12u);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(results[i].image_id, "q" + std::to_string(i));
  EXPECT_LE(server.peak_in_flight(), 3);
  EXPECT_GE(server.peak_in_flight(), 2);
}
