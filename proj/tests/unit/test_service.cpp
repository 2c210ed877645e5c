#include <gtest/gtest.h>

#include <future>

#include "support.hpp"
#include "usgan/service.hpp"

using namespace usgan;
using usgan::testing::random_image;

namespace {

std::string png_b64(const Image& img) { return base64_encode(encode_png(img)); }

Image quantized(const Image& img) { return decode_png(encode_png(img)); }

std::filesystem::path make_checkpoint(const std::string& name, bool zero_head, std::uint64_t seed) {
  const auto dir = usgan::testing::temp_dir("svc") / name;
  auto nets = Networks<float>::init(usgan::testing::tiny_config(), seed);
  if (!zero_head) nets.generator = usgan::testing::with_random_head(nets.generator, seed + 1, 0.1);
  save_checkpoint(dir, nets, CheckpointMeta{nets.config});
  return dir;
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = service_.start("127.0.0.1", 0);
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override { service_.stop(); }

  Json post_json(const std::string& path, const Json& body, int want_status) {
    auto res = client_->Post(std::string(kApiPrefix) + path, body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, want_status) << res->body;
    return Json::parse(res->body);
  }

  Service service_{2};
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

void expect_api_error(const Json& j, const std::string& code) {
  EXPECT_EQ(j["code"], code);
  EXPECT_TRUE(j.contains("message"));
  EXPECT_TRUE(j.contains("detail"));
}

}  // namespace

TEST_F(ServiceTest, HealthWithoutAndWithModel) {
  auto res = client_->Get("/api/v1/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  auto j = Json::parse(res->body);
  EXPECT_EQ(j["status"], "no_model");
  EXPECT_TRUE(j["checkpoint_id"].is_null());

  const auto id = service_.load_checkpoint(make_checkpoint("a", true, 1));
  j = Json::parse(client_->Get("/api/v1/health")->body);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["checkpoint_id"], id);
  EXPECT_GE(j["uptime_s"].get<double>(), 0.0);
}

TEST_F(ServiceTest, EnhanceWithoutModelIs404) {
  expect_api_error(post_json("/enhance", {{"image", png_b64(random_image(16, 16, 1))}, {"alpha", 0.5}}, 404), "not_found");
}

TEST_F(ServiceTest, AlphaZeroOnZeroResidualReturnsInput) {
  service_.load_checkpoint(make_checkpoint("zero", true, 2));
  const auto img = quantized(random_image(40, 56, 3));
  const auto j = post_json("/enhance", {{"image", png_b64(img)}, {"alpha", 0.0}}, 200);
  EXPECT_EQ(decode_png(base64_decode(j["image"].get<std::string>())), img);
  EXPECT_EQ(j["alpha_echo"]["alpha"], 0.0);
  EXPECT_GE(j["latency_ms"].get<double>(), 0.0);
}

TEST_F(ServiceTest, EnhanceValidation) {
  service_.load_checkpoint(make_checkpoint("v", true, 2));
  const auto img = png_b64(random_image(16, 16, 4));
  expect_api_error(post_json("/enhance", {{"image", img}, {"alpha", 1.5}}, 400), "bad_request");
  expect_api_error(post_json("/enhance", {{"image", img}}, 400), "bad_request");
  expect_api_error(post_json("/enhance", {{"image", img}, {"alpha", 0.5}, {"alpha_field", {{"default_alpha", 0.5}}}}, 400), "bad_request");
  expect_api_error(post_json("/enhance", {{"image", "not-a-png"}, {"alpha", 0.5}}, 400), "bad_request");
  expect_api_error(post_json("/enhance", {{"image", img}, {"alpha", "high"}}, 400), "bad_request");
  expect_api_error(post_json("/enhance", {{"image", img}, {"alpha", 0.5}, {"checkpoint_id", "nope"}}, 404), "not_found");
  auto res = client_->Post("/api/v1/enhance", "{oops", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  expect_api_error(Json::parse(res->body), "bad_request");
}

TEST_F(ServiceTest, AlphaFieldEchoMatchesPaintedRegions) {
  service_.load_checkpoint(make_checkpoint("f", false, 5));
  const auto img = random_image(16, 32, 6);
  Json regions = Json::array();
  const double alphas[4] = {0.6, 0.7, 0.8, 0.9};
  for (int k = 0; k < 4; ++k) regions.push_back({{"alpha", alphas[k]}, {"rect", {0, 8 * k, 16, 8 * k + 8}}});
  const auto j = post_json("/enhance", {{"image", png_b64(img)}, {"alpha_field", {{"default_alpha", 0.0}, {"regions", regions}}}}, 200);
  const auto echo = decode_png_u8(base64_decode(j["alpha_echo"]["alpha_field"]["png"].get<std::string>()));
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 32; ++c) EXPECT_EQ(echo.at(r, c), std::lround(alphas[c / 8] * 255)) << r << "," << c;
  EXPECT_EQ(j["alpha_echo"]["alpha_field"]["regions"], 4);
  EXPECT_EQ(j["alpha_echo"]["alpha_field"]["min"], 0.6);
  EXPECT_EQ(j["alpha_echo"]["alpha_field"]["max"], 0.9);

  expect_api_error(post_json("/enhance", {{"image", png_b64(img)}, {"alpha_field", {{"regions", {{{"alpha", 0.5}, {"rect", {0, 0, 99, 4}}}}}}}}, 400),
                   "bad_request");
  expect_api_error(post_json("/enhance", {{"image", png_b64(img)}, {"alpha_field", {{"shape", "circle"}}}}, 400), "bad_request");
}

TEST_F(ServiceTest, EnhanceIsIdempotent) {
  service_.load_checkpoint(make_checkpoint("i", false, 7));
  const Json body{{"image", png_b64(random_image(24, 24, 8))}, {"alpha", 0.7}};
  const auto a = post_json("/enhance", body, 200), b = post_json("/enhance", body, 200);
  EXPECT_EQ(a["image"], b["image"]);
}

TEST_F(ServiceTest, ConcurrentRequestsAgree) {
  service_.load_checkpoint(make_checkpoint("c", false, 9));
  const Json body{{"image", png_b64(random_image(32, 32, 10))}, {"alpha", 0.4}};
  std::vector<std::future<std::string>> futs;
  for (int i = 0; i < 4; ++i)
    futs.push_back(std::async(std::launch::async, [&] {
      httplib::Client c("127.0.0.1", port_);
      auto res = c.Post("/api/v1/enhance", body.dump(), "application/json");
      return res && res->status == 200 ? Json::parse(res->body)["image"].get<std::string>() : std::string();
    }));
  const auto first = futs[0].get();
  EXPECT_FALSE(first.empty());
  for (std::size_t i = 1; i < futs.size(); ++i) EXPECT_EQ(futs[i].get(), first);
}

TEST_F(ServiceTest, VolumeUploadAndPlanes) {
  Volume v(8, 10, 12);
  for (std::size_t i = 0; i < v.data().size(); ++i) v.data()[i] = static_cast<float>((i * 7) % 256) / 255.0f;
  const auto archive = volume_to_archive(v);
  httplib::MultipartFormDataItems items{{"archive", std::string(archive.begin(), archive.end()), "vol.tar", "application/x-tar"}};
  auto res = client_->Post("/api/v1/volumes", items);
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201) << res->body;
  const auto j = Json::parse(res->body);
  EXPECT_EQ(j["extent"], Json({8, 10, 12}));
  const std::string id = j["id"];

  res = client_->Get("/api/v1/volumes/" + id + "/planes?kind=A&index=0");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  const auto want = encode_png(extract_plane(v, PlaneKind::A, 0).data);
  EXPECT_EQ(res->body, std::string(want.begin(), want.end()));

  res = client_->Get("/api/v1/volumes/" + id + "/planes?kind=C&index=7");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  res = client_->Get("/api/v1/volumes/" + id + "/planes?kind=Z&index=0");
  EXPECT_EQ(res->status, 400);
  expect_api_error(Json::parse(res->body), "bad_request");
  res = client_->Get("/api/v1/volumes/" + id + "/planes?kind=A&index=12");
  EXPECT_EQ(res->status, 404);
  expect_api_error(Json::parse(res->body), "not_found");
  res = client_->Get("/api/v1/volumes/vol-missing/planes?kind=A&index=0");
  EXPECT_EQ(res->status, 404);
  res = client_->Get("/api/v1/volumes/" + id + "/planes?kind=A&index=x");
  EXPECT_EQ(res->status, 400);
}

TEST_F(ServiceTest, VolumeUploadRejectsGarbage) {
  httplib::MultipartFormDataItems items{{"archive", "not a tar", "v.tar", "application/x-tar"}};
  auto res = client_->Post("/api/v1/volumes", items);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  res = client_->Post("/api/v1/volumes", httplib::MultipartFormDataItems{});
  EXPECT_EQ(res->status, 400);
}

TEST_F(ServiceTest, HotSwapReportsNewCheckpoint) {
  const auto first = service_.load_checkpoint(make_checkpoint("one", true, 11));
  const auto second_dir = make_checkpoint("two", false, 12);
  const auto j = post_json("/admin/checkpoint", {{"path", second_dir.string()}}, 200);
  EXPECT_NE(j["checkpoint_id"], first);
  EXPECT_EQ(Json::parse(client_->Get("/api/v1/health")->body)["checkpoint_id"], j["checkpoint_id"]);
  expect_api_error(post_json("/admin/checkpoint", {{"path", "/nonexistent/ckpt"}}, 404), "not_found");
  expect_api_error(post_json("/admin/checkpoint", {{"dir", "x"}}, 400), "bad_request");
}

TEST_F(ServiceTest, UnknownRouteHasErrorBody) {
  auto res = client_->Get("/api/v1/nothing");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  expect_api_error(Json::parse(res->body), "not_found");
}
