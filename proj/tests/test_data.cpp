#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "roifusion/data.hpp"

using namespace roifusion;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& p) : path(p) {}
  ~TempFile() { std::remove(path.c_str()); }
};

void write_bytes(const std::string& path, const std::vector<float>& floats) {
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(floats.data()),
           std::streamsize(floats.size() * 4));
}

}  // namespace

TEST_CASE("read_velodyne decodes a single point") {
  TempFile f("velo_one.bin");
  write_bytes(f.path, {1.0f, 2.0f, 3.0f, 0.5f});
  PointCloud cloud = read_velodyne(f.path);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud.x(0) == 1.0);
  CHECK(cloud.y(0) == 2.0);
  CHECK(cloud.z(0) == 3.0);
  CHECK(cloud.reflectance[0] == 0.5);
}

TEST_CASE("read_velodyne rejects empty and misaligned files") {
  TempFile f("velo_bad.bin");
  write_bytes(f.path, {});
  CHECK_THROWS_AS(read_velodyne(f.path), MalformedFile);
  write_bytes(f.path, {1.0f, 2.0f, 3.0f});  // 12 bytes
  CHECK_THROWS_AS(read_velodyne(f.path), MalformedFile);
}

TEST_CASE("read_velodyne rejects non-finite values") {
  TempFile f("velo_nan.bin");
  write_bytes(f.path, {1.0f, std::numeric_limits<float>::quiet_NaN(), 0.0f, 0.0f});
  CHECK_THROWS_AS(read_velodyne(f.path), MalformedFile);
}

TEST_CASE("velodyne write/read round trip is exact") {
  Rng rng(140);
  PointCloud cloud;
  for (int i = 0; i < 37; ++i) {
    // values representable in f32 so the round trip is bit-exact
    cloud.push(double(float(rng.uniform(-50, 50))),
               double(float(rng.uniform(-50, 50))),
               double(float(rng.uniform(-3, 3))),
               double(float(rng.uniform(0, 1))));
  }
  TempFile f("velo_rt.bin");
  write_velodyne(f.path, cloud);
  PointCloud back = read_velodyne(f.path);
  REQUIRE(back.size() == cloud.size());
  CHECK(back.xyz == cloud.xyz);
  CHECK(back.reflectance == cloud.reflectance);
}

TEST_CASE("read_calib composes T and keeps M") {
  TempFile f("calib_test.txt");
  {
    std::ofstream os(f.path);
    os << "P2: 1 0 0 10  0 1 0 20  0 0 1 0\n";
    os << "R0_rect: 1 0 0 0 1 0 0 0 1\n";
    os << "Tr_velo_to_cam: 0 -1 0 0  0 0 -1 0  1 0 0 -0.27\n";
  }
  CalibContext calib = read_calib(f.path, 640, 480);
  CHECK(calib.M[3] == 10.0);
  CHECK(calib.M[7] == 20.0);
  // identity R0: T == expand4(Tr)
  CHECK(calib.T[0] == 0.0);
  CHECK(calib.T[1] == -1.0);
  CHECK(calib.T[11] == -0.27);
  CHECK(calib.T[15] == 1.0);
  CHECK(calib.width == 640);
}

TEST_CASE("read_calib multiplies R0_rect into T") {
  TempFile f("calib_mul.txt");
  {
    std::ofstream os(f.path);
    // R0 = rotation about z by 90 degrees
    os << "P2: 1 0 0 0  0 1 0 0  0 0 1 0\n";
    os << "R0_rect: 0 -1 0 1 0 0 0 0 1\n";
    os << "Tr_velo_to_cam: 1 0 0 2  0 1 0 3  0 0 1 4\n";
  }
  CalibContext calib = read_calib(f.path);
  // hand product: row 0 of R0*Tr = (0,-1,0 | -3), row 1 = (1,0,0 | 2)
  CHECK(calib.T[0] == Catch::Approx(0.0));
  CHECK(calib.T[1] == Catch::Approx(-1.0));
  CHECK(calib.T[3] == Catch::Approx(-3.0));
  CHECK(calib.T[4] == Catch::Approx(1.0));
  CHECK(calib.T[7] == Catch::Approx(2.0));
}

TEST_CASE("read_calib missing key") {
  TempFile f("calib_missing.txt");
  {
    std::ofstream os(f.path);
    os << "R0_rect: 1 0 0 0 1 0 0 0 1\n";
    os << "Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";
  }
  CHECK_THROWS_AS(read_calib(f.path), MissingKey);
}

TEST_CASE("classify_difficulty reproduces the threshold table") {
  auto label = [](double height, int occ, double trunc) {
    KittiLabel l;
    l.bbox[1] = 100.0;
    l.bbox[3] = 100.0 + height;
    l.occlusion = occ;
    l.truncation = trunc;
    return l;
  };
  CHECK(classify_difficulty(label(45, 0, 0.10)) == Difficulty::Easy);
  CHECK(classify_difficulty(label(30, 1, 0.25)) == Difficulty::Moderate);
  CHECK(classify_difficulty(label(20, 2, 0.40)) == Difficulty::Ignored);
  CHECK(classify_difficulty(label(30, 2, 0.45)) == Difficulty::Hard);
  CHECK(classify_difficulty(label(45, 0, 0.16)) == Difficulty::Moderate);
  CHECK(classify_difficulty(label(39, 0, 0.10)) == Difficulty::Moderate);
  CHECK(classify_difficulty(label(45, 3, 0.0)) == Difficulty::Ignored);
}

TEST_CASE("classify_difficulty is monotone in each field") {
  auto label = [](double height, int occ, double trunc) {
    KittiLabel l;
    l.bbox[1] = 0.0;
    l.bbox[3] = height;
    l.occlusion = occ;
    l.truncation = trunc;
    return l;
  };
  auto rank = [](Difficulty d) { return int(d); };  // Easy < Mod < Hard < Ignored
  for (double h : {20.0, 25.0, 30.0, 40.0, 45.0})
    for (int occ : {0, 1, 2, 3})
      for (double t : {0.0, 0.15, 0.30, 0.50, 0.60}) {
        Difficulty base = classify_difficulty(label(h, occ, t));
        CHECK(rank(classify_difficulty(label(h + 5, occ, t))) <= rank(base));
        if (occ > 0)
          CHECK(rank(classify_difficulty(label(h, occ - 1, t))) <= rank(base));
        CHECK(rank(classify_difficulty(label(h, occ, std::max(0.0, t - 0.1)))) <=
              rank(base));
      }
}

TEST_CASE("read_labels parses 15 and 16 field lines") {
  TempFile f("label_test.txt");
  {
    std::ofstream os(f.path);
    os << "Car 0.00 0 1.57 100 120 200 180 1.5 1.7 4.2 2.0 1.6 15.0 1.2\n";
    os << "Pedestrian 0.10 1 -0.5 50 60 70 120 1.8 0.6 0.9 -3.0 1.7 8.0 0.3 "
          "0.87\n";
  }
  auto labels = read_labels(f.path);
  REQUIRE(labels.size() == 2);
  CHECK(labels[0].type == "Car");
  CHECK(labels[0].dim_h == 1.5);
  CHECK(labels[0].score == -1.0);
  CHECK(labels[1].score == Catch::Approx(0.87));
  CHECK(labels[1].occlusion == 1);
}

TEST_CASE("label_to_lidar_box round trips a heading through the transform") {
  // synthetic calib with the standard axis permutation
  SyntheticConfig cfg;
  CalibContext calib = synthetic_calib(cfg);
  KittiLabel l;
  l.type = "Car";
  l.dim_h = 1.5;
  l.dim_w = 1.7;
  l.dim_l = 4.2;
  // place the box center at lidar (10, 2, 0.5): camera point = T * p
  double p[3] = {10, 2, 0.5};
  double cam[3];
  for (int r = 0; r < 3; ++r)
    cam[r] = calib.T[4 * r] * p[0] + calib.T[4 * r + 1] * p[1] +
             calib.T[4 * r + 2] * p[2] + calib.T[4 * r + 3];
  l.loc[0] = cam[0];
  l.loc[1] = cam[1] + 0.5 * l.dim_h;  // KITTI stores the bottom-face center
  l.loc[2] = cam[2];
  l.rotation_y = 0.6;
  OrientedBox3D box = label_to_lidar_box(l, calib);
  CHECK(box.center[0] == Catch::Approx(10.0).margin(1e-9));
  CHECK(box.center[1] == Catch::Approx(2.0).margin(1e-9));
  CHECK(box.center[2] == Catch::Approx(0.5).margin(1e-9));
  // heading consistency: transform the lidar heading back to camera frame
  double dir[3] = {std::cos(box.yaw), std::sin(box.yaw), 0};
  double dc[3];
  for (int r = 0; r < 3; ++r)
    dc[r] = calib.T[4 * r] * dir[0] + calib.T[4 * r + 1] * dir[1] +
            calib.T[4 * r + 2] * dir[2];
  CHECK(std::atan2(-dc[2], dc[0]) == Catch::Approx(0.6).margin(1e-9));
}

TEST_CASE("read_split skips blank lines") {
  TempFile f("split_test.txt");
  {
    std::ofstream os(f.path);
    os << "000000\n\n000003\n000007\n\n";
  }
  auto ids = read_split(f.path);
  REQUIRE(ids == std::vector<std::string>{"000000", "000003", "000007"});
}

TEST_CASE("read_split reproduces a 3712/3769 partition") {
  TempFile train("train_split.txt"), val("val_split.txt");
  {
    std::ofstream ta(train.path), va(val.path);
    for (int i = 0; i < 7481; ++i) {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "%06d", i);
      if (i % 2 == 0 && i / 2 < 3712)
        ta << buf << "\n";
      else
        va << buf << "\n";
    }
  }
  CHECK(read_split(train.path).size() == 3712);
  CHECK(read_split(val.path).size() == 3769);
}

TEST_CASE("subsample_cloud downsamples and pads deterministically") {
  Rng rng(141);
  PointCloud cloud;
  for (int i = 0; i < 100; ++i) cloud.push(i, 0, 0, 0.5);
  Rng r1(7), r2(7);
  PointCloud a = subsample_cloud(cloud, 40, r1);
  PointCloud b = subsample_cloud(cloud, 40, r2);
  CHECK(a.xyz == b.xyz);
  CHECK(a.size() == 40);

  PointCloud tiny;
  tiny.push(1, 2, 3, 0.1);
  tiny.push(4, 5, 6, 0.2);
  Rng r3(9);
  PointCloud padded = subsample_cloud(tiny, 5, r3);
  CHECK(padded.size() == 5);
  // first two points preserved, the rest resampled from them
  CHECK(padded.x(0) == 1.0);
  CHECK(padded.x(1) == 4.0);
  for (std::size_t i = 2; i < 5; ++i)
    CHECK((padded.x(i) == 1.0 || padded.x(i) == 4.0));
}

TEST_CASE("gen_synthetic_scene zero objects is clutter only") {
  SyntheticConfig cfg;
  cfg.min_objects = 0;
  cfg.max_objects = 0;
  cfg.n_points = 300;
  SyntheticScene scene = gen_synthetic_scene(cfg, 3);
  CHECK(scene.boxes.empty());
  CHECK(scene.cloud.size() >= 300);
  for (int id : scene.point_object) CHECK(id == -1);
  // all-background oracle
  for (int u = 0; u < scene.seg.width; ++u)
    for (int v = 0; v < scene.seg.height; ++v)
      CHECK(scene.seg.score_at(u, v, 0) == 1.0);
}

TEST_CASE("gen_synthetic_scene zero noise puts object points on the surface") {
  SyntheticConfig cfg;
  cfg.min_objects = 1;
  cfg.max_objects = 1;
  cfg.noise_sigma = 0.0;
  cfg.n_points = 400;
  SyntheticScene scene = gen_synthetic_scene(cfg, 5);
  REQUIRE(scene.boxes.size() == 1);
  const OrientedBox3D& box = scene.boxes[0].box;
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    if (scene.point_object[i] != 0) continue;
    // surface distance: in the box frame, the max normalized coordinate is 1
    double dx = scene.cloud.x(i) - box.center[0];
    double dy = scene.cloud.y(i) - box.center[1];
    double dz = scene.cloud.z(i) - box.center[2];
    double c = std::cos(-box.yaw), s = std::sin(-box.yaw);
    double lx = c * dx - s * dy;
    double ly = s * dx + c * dy;
    double m = std::max({std::abs(lx) / (box.l / 2), std::abs(ly) / (box.w / 2),
                         std::abs(dz) / (box.h / 2)});
    CHECK(m == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("gen_synthetic_scene is deterministic per seed") {
  SyntheticConfig cfg;
  cfg.n_points = 500;
  SyntheticScene a = gen_synthetic_scene(cfg, 42);
  SyntheticScene b = gen_synthetic_scene(cfg, 42);
  CHECK(a.cloud.xyz == b.cloud.xyz);
  CHECK(a.boxes.size() == b.boxes.size());
  for (std::size_t i = 0; i < a.boxes.size(); ++i) {
    CHECK(a.boxes[i].box.center == b.boxes[i].box.center);
    CHECK(a.boxes[i].box.yaw == b.boxes[i].box.yaw);
  }
  CHECK(a.seg.scores == b.seg.scores);
}

TEST_CASE("synthetic boxes do not overlap in BEV and hold enough points") {
  SyntheticConfig cfg;
  cfg.min_objects = 3;
  cfg.max_objects = 4;
  cfg.n_points = 1200;
  SyntheticScene scene = gen_synthetic_scene(cfg, 21);
  for (std::size_t i = 0; i < scene.boxes.size(); ++i)
    for (std::size_t j = i + 1; j < scene.boxes.size(); ++j)
      CHECK(iou_bev(scene.boxes[i].box, scene.boxes[j].box) == 0.0);
  for (const auto& lb : scene.boxes) {
    std::size_t count = 0;
    for (std::size_t p = 0; p < scene.cloud.size(); ++p)
      if (box_contains(lb.box, scene.cloud.x(p), scene.cloud.y(p),
                       scene.cloud.z(p)))
        ++count;
    CHECK(count >= cfg.min_points_per_box);
  }
}

TEST_CASE("oracle mask pixels correspond exactly to projected object points") {
  SyntheticConfig cfg;
  cfg.min_objects = 2;
  cfg.max_objects = 2;
  cfg.dilate_px = 0;
  cfg.n_points = 800;
  SyntheticScene scene = gen_synthetic_scene(cfg, 33);
  std::vector<char> expected(std::size_t(scene.seg.width) * scene.seg.height, 0);
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    if (scene.point_object[i] < 0) continue;
    ProjectedPoint p = project_point(scene.cloud.x(i), scene.cloud.y(i),
                                     scene.cloud.z(i), scene.calib);
    if (!p.in_image) continue;
    expected[std::size_t(int(p.u)) * scene.seg.height + std::size_t(int(p.v))] = 1;
  }
  for (int u = 0; u < scene.seg.width; ++u)
    for (int v = 0; v < scene.seg.height; ++v) {
      bool fg = scene.seg.max_foreground(u, v) > 0.0;
      bool want = expected[std::size_t(u) * scene.seg.height + std::size_t(v)] != 0;
      CHECK(fg == want);
    }
}

TEST_CASE("RFSC scene archive round trip") {
  SyntheticConfig cfg;
  cfg.n_points = 300;
  SyntheticScene scene = gen_synthetic_scene(cfg, 55);
  TempFile f("scene_test.rfsc");
  write_scene(f.path, scene);
  SyntheticScene back = read_scene(f.path);
  CHECK(back.cloud.xyz == scene.cloud.xyz);
  CHECK(back.cloud.reflectance == scene.cloud.reflectance);
  CHECK(back.point_object == scene.point_object);
  REQUIRE(back.boxes.size() == scene.boxes.size());
  for (std::size_t i = 0; i < back.boxes.size(); ++i) {
    CHECK(back.boxes[i].box.center == scene.boxes[i].box.center);
    CHECK(back.boxes[i].box.yaw == scene.boxes[i].box.yaw);
    CHECK(back.boxes[i].class_id == scene.boxes[i].class_id);
  }
  CHECK(back.calib.T == scene.calib.T);
  CHECK(back.calib.M == scene.calib.M);
  CHECK(back.seed == scene.seed);
  // scores stored as f32
  REQUIRE(back.seg.scores.size() == scene.seg.scores.size());
  for (std::size_t i = 0; i < back.seg.scores.size(); ++i)
    CHECK(back.seg.scores[i] == Catch::Approx(scene.seg.scores[i]).margin(1e-6));
}

TEST_CASE("frustum_filter keeps only points that project into the image") {
  SyntheticConfig cfg;
  CalibContext calib = synthetic_calib(cfg);
  PointCloud cloud;
  cloud.push(15, 0, 1, 0.5);    // ahead: visible
  cloud.push(-15, 0, 1, 0.5);   // behind the camera
  cloud.push(15, 200, 1, 0.5);  // far off to the side
  PointCloud kept = frustum_filter(cloud, calib);
  REQUIRE(kept.size() == 1);
  CHECK(kept.x(0) == 15.0);
}
