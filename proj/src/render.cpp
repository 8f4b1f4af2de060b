#include "mvdesc/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mvdesc/parallel.hpp"

namespace mvdesc {

void Camera::validate() const {
    if ((eye - target).norm() < 1e-12) throw InputError("camera: eye coincides with target");
    if (!(near_plane > 0.0 && near_plane < far_plane))
        throw InputError("camera: need 0 < near < far");
    Vec3 d = (target - eye).normalized();
    if (d.cross(up.normalized()).norm() < 1e-6)
        throw InputError("camera: up parallel to view direction");
    if (resolution < 1) throw InputError("camera: resolution must be positive");
}

namespace {

struct CameraFrame {
    Vec3 eye, forward, right, down;  // "down" so that rows grow downward
    double tan_half_fov;
    int res;
};

CameraFrame make_frame(const Camera& cam) {
    CameraFrame f;
    f.eye = cam.eye;
    f.forward = (cam.target - cam.eye).normalized();
    f.right = f.forward.cross(cam.up).normalized();
    f.down = f.forward.cross(f.right);  // unit, orthogonal
    f.tan_half_fov = std::tan(0.5 * cam.vertical_fov);
    f.res = cam.resolution;
    return f;
}

struct ViewVertex {
    double x, y;  // continuous pixel coords (x = col, y = row)
    double z;     // view depth (> 0 in front of the eye)
    Vec3 world;
};

// Maps a view-space point (r: right, d: down, z: depth) to pixel coords.
void to_screen(const CameraFrame& f, double r, double d, double z, double& col, double& row) {
    double ndc_x = r / (z * f.tan_half_fov);
    double ndc_y = d / (z * f.tan_half_fov);
    col = (ndc_x + 1.0) * 0.5 * f.res - 0.5;
    row = (ndc_y + 1.0) * 0.5 * f.res - 0.5;
}

struct ClipVertex {
    Vec3 view;  // (right, down, depth)
    Vec3 world;
};

// Sutherland-Hodgman against the near plane (depth >= near).
int clip_near(const ClipVertex in[3], double near_plane, ClipVertex out[4]) {
    int n = 0;
    for (int i = 0; i < 3; ++i) {
        const ClipVertex& a = in[i];
        const ClipVertex& b = in[(i + 1) % 3];
        bool ain = a.view.z() >= near_plane;
        bool bin = b.view.z() >= near_plane;
        if (ain) out[n++] = a;
        if (ain != bin) {
            double t = (near_plane - a.view.z()) / (b.view.z() - a.view.z());
            ClipVertex c;
            c.view = a.view + t * (b.view - a.view);
            c.world = a.world + t * (b.world - a.world);
            out[n++] = c;
        }
    }
    return n;
}

inline double cross2(double ux, double uy, double vx, double vy) { return ux * vy - uy * vx; }

// Fill-rule tie break for boundary pixels: exactly one of a shared edge's
// two directions is accepted.
inline bool edge_accepts_zero(double ux, double uy) {
    return uy < 0.0 || (uy == 0.0 && ux > 0.0);
}

// Rasterizes one screen triangle over rows [row_begin,row_end); fragment(r, c,
// depth, world) is called for covered pixel centers.
template <class Fragment>
void raster_triangle(ViewVertex v0, ViewVertex v1, ViewVertex v2, double far_plane, int res,
                     int row_begin, int row_end, Fragment&& fragment) {
    double area = cross2(v1.x - v0.x, v1.y - v0.y, v2.x - v0.x, v2.y - v0.y);
    if (area == 0.0) return;
    if (area < 0.0) {
        std::swap(v1, v2);
        area = -area;
    }
    int cmin = std::max(0, (int)std::ceil(std::min({v0.x, v1.x, v2.x})));
    int cmax = std::min(res - 1, (int)std::floor(std::max({v0.x, v1.x, v2.x})));
    int rmin = std::max(row_begin, (int)std::ceil(std::min({v0.y, v1.y, v2.y})));
    int rmax = std::min(row_end - 1, (int)std::floor(std::max({v0.y, v1.y, v2.y})));
    if (cmin > cmax || rmin > rmax) return;

    const ViewVertex* v[3] = {&v0, &v1, &v2};
    for (int r = rmin; r <= rmax; ++r) {
        for (int c = cmin; c <= cmax; ++c) {
            double e[3];
            bool inside = true;
            for (int i = 0; i < 3; ++i) {
                const ViewVertex& a = *v[i];
                const ViewVertex& b = *v[(i + 1) % 3];
                e[i] = cross2(b.x - a.x, b.y - a.y, c - a.x, r - a.y);
                if (e[i] < 0.0 || (e[i] == 0.0 && !edge_accepts_zero(b.x - a.x, b.y - a.y))) {
                    inside = false;
                    break;
                }
            }
            if (!inside) continue;
            // barycentric weights opposite each vertex
            double b0 = e[1] / area, b1 = e[2] / area, b2 = e[0] / area;
            // perspective-correct depth: 1/z interpolates linearly in screen space
            double invz = b0 / v0.z + b1 / v1.z + b2 / v2.z;
            double z = 1.0 / invz;
            if (z > far_plane) continue;
            Vec3 world = (b0 / v0.z * v0.world + b1 / v1.z * v1.world + b2 / v2.z * v2.world) * z;
            fragment(r, c, z, world);
        }
    }
}

// Per-triangle screen-space setup shared by the shading and depth passes.
struct PreparedMesh {
    // up to two triangles per input face after near clipping
    struct Tri {
        ViewVertex v[3];
        std::uint32_t face;
    };
    std::vector<Tri> tris;
};

PreparedMesh prepare(const TriangleMesh& mesh, const Camera& cam, const CameraFrame& f) {
    PreparedMesh pm;
    pm.tris.reserve(mesh.faces.size());
    for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        if (fi < mesh.degenerate_face.size() && mesh.degenerate_face[fi])
            continue;  // no well-defined normal; projects to a sliver at best
        ClipVertex cv[3];
        for (int i = 0; i < 3; ++i) {
            const Vec3& w = mesh.vertices[mesh.faces[fi][i]];
            Vec3 rel = w - f.eye;
            cv[i].view = Vec3(rel.dot(f.right), rel.dot(f.down), rel.dot(f.forward));
            cv[i].world = w;
        }
        ClipVertex poly[4];
        int n = clip_near(cv, cam.near_plane, poly);
        for (int i = 1; i + 1 < n; ++i) {
            PreparedMesh::Tri t;
            const ClipVertex* p[3] = {&poly[0], &poly[i], &poly[i + 1]};
            for (int j = 0; j < 3; ++j) {
                t.v[j].z = p[j]->view.z();
                to_screen(f, p[j]->view.x(), p[j]->view.y(), t.v[j].z, t.v[j].x, t.v[j].y);
                t.v[j].world = p[j]->world;
            }
            t.face = static_cast<std::uint32_t>(fi);
            pm.tris.push_back(t);
        }
    }
    return pm;
}

double phong(const Vec3& n_in, const Vec3& l, const Vec3& v, const ShadingConfig& s) {
    Vec3 n = n_in;
    if (n.dot(v) < 0.0) n = -n;  // two-sided
    double ndl = std::max(0.0, n.dot(l));
    Vec3 r = 2.0 * n.dot(l) * n - l;
    double rdv = std::max(0.0, r.dot(v));
    double intensity = s.ambient + s.diffuse * ndl + s.specular * std::pow(rdv, s.shininess);
    return std::clamp(intensity, 0.0, 1.0);
}

// Band-parallel rasterization: every band walks all triangles in order, so a
// pixel's result is independent of the band count and scheduling.
ShadedImage render_shaded_impl(const TriangleMesh& mesh, const Camera& cam, const Vec3& light_dir,
                               const ShadingConfig& shading, bool parallel) {
    cam.validate();
    CameraFrame f = make_frame(cam);
    PreparedMesh pm = prepare(mesh, cam, f);
    ShadedImage img;
    img.resolution = cam.resolution;
    img.pixels.assign(static_cast<std::size_t>(cam.resolution) * cam.resolution, 0.0f);
    std::vector<float> depth(img.pixels.size(), std::numeric_limits<float>::infinity());
    Vec3 l = light_dir.normalized();

    const int band = 32;
    const std::size_t nbands = (cam.resolution + band - 1) / band;
    auto body = [&](std::size_t bi) {
        int r0 = static_cast<int>(bi) * band;
        int r1 = std::min(cam.resolution, r0 + band);
        for (const auto& t : pm.tris) {
            Vec3 n = mesh.face_normal(t.face);
            raster_triangle(t.v[0], t.v[1], t.v[2], cam.far_plane, cam.resolution, r0, r1,
                            [&](int r, int c, double z, const Vec3& world) {
                                std::size_t idx = (std::size_t)r * cam.resolution + c;
                                if ((float)z < depth[idx]) {
                                    depth[idx] = (float)z;
                                    Vec3 v = (cam.eye - world).normalized();
                                    img.pixels[idx] = (float)phong(n, l, v, shading);
                                }
                            });
        }
    };
    if (parallel)
        parallel_for(nbands, body);
    else
        serial_for(nbands, body);
    return img;
}

}  // namespace

ShadedImage render_shaded(const TriangleMesh& mesh, const Camera& cam, const Vec3& light_dir,
                          const ShadingConfig& shading) {
    return render_shaded_impl(mesh, cam, light_dir, shading, true);
}

ShadedImage render_shaded_serial(const TriangleMesh& mesh, const Camera& cam, const Vec3& light_dir,
                                 const ShadingConfig& shading) {
    return render_shaded_impl(mesh, cam, light_dir, shading, false);
}

DepthBuffer rasterize_depth(const TriangleMesh& mesh, const Camera& cam) {
    cam.validate();
    CameraFrame f = make_frame(cam);
    PreparedMesh pm = prepare(mesh, cam, f);
    DepthBuffer buf;
    buf.resolution = cam.resolution;
    buf.depth.assign(static_cast<std::size_t>(cam.resolution) * cam.resolution,
                     std::numeric_limits<float>::infinity());
    const int band = 32;
    const std::size_t nbands = (cam.resolution + band - 1) / band;
    parallel_for(nbands, [&](std::size_t bi) {
        int r0 = static_cast<int>(bi) * band;
        int r1 = std::min(cam.resolution, r0 + band);
        for (const auto& t : pm.tris) {
            raster_triangle(t.v[0], t.v[1], t.v[2], cam.far_plane, cam.resolution, r0, r1,
                            [&](int r, int c, double z, const Vec3&) {
                                std::size_t idx = (std::size_t)r * cam.resolution + c;
                                if ((float)z < buf.depth[idx]) buf.depth[idx] = (float)z;
                            });
        }
    });
    return buf;
}

bool project_point(const Camera& cam, const Vec3& p, double& row, double& col, double& depth) {
    CameraFrame f = make_frame(cam);
    Vec3 rel = p - f.eye;
    double z = rel.dot(f.forward);
    if (z < cam.near_plane || z > cam.far_plane) return false;
    to_screen(f, rel.dot(f.right), rel.dot(f.down), z, col, row);
    if (col < -0.5 || col > cam.resolution - 0.5 || row < -0.5 || row > cam.resolution - 0.5)
        return false;
    depth = z;
    return true;
}

bool IndexMap::contains(std::uint32_t sample_index) const {
    for (std::uint32_t v : index)
        if (v == sample_index) return true;
    return false;
}

IndexMap render_index(const TriangleMesh& mesh, const std::vector<PointSample>& samples,
                      const Camera& cam) {
    DepthBuffer buf = rasterize_depth(mesh, cam);
    IndexMap map;
    map.resolution = cam.resolution;
    map.index.assign(buf.depth.size(), kEmptyPixel);
    map.depth.assign(buf.depth.size(), std::numeric_limits<float>::infinity());
    const double eps_depth = 1e-3 * (cam.far_plane - cam.near_plane);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double row, col, z;
        if (!project_point(cam, samples[i].position, row, col, z)) continue;
        int r = std::clamp((int)std::lround(row), 0, cam.resolution - 1);
        int c = std::clamp((int)std::lround(col), 0, cam.resolution - 1);
        std::size_t idx = (std::size_t)r * cam.resolution + c;
        // compare against the deepest rasterized depth in the 3x3 pixel
        // neighborhood: a single pixel-center depth under-reports steep
        // (grazing) surfaces by up to slope * pixel size, which would mark
        // visible silhouette-adjacent samples occluded. A real occluder in
        // front of the sample still fails this test because its depth gap
        // grows with surface distance, not sub-pixel projection error. When
        // no pixel in the neighborhood is covered the sample lies outside the
        // rasterized footprint entirely and is accepted (ref stays +inf); a
        // sample in a sub-pixel silhouette gap instead has covered neighbors
        // and must match their depth, which rejects back-facing points that
        // slip through the jagged polygonal silhouette.
        double ref = -std::numeric_limits<double>::infinity();
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= cam.resolution || cc < 0 || cc >= cam.resolution) continue;
                float d = buf.depth[(std::size_t)rr * cam.resolution + cc];
                if (std::isfinite(d) && d > ref) ref = d;
            }
        if (!std::isfinite(ref)) ref = std::numeric_limits<double>::infinity();
        if (z <= ref + eps_depth && z < map.depth[idx]) {
            map.depth[idx] = (float)z;
            map.index[idx] = static_cast<std::uint32_t>(i);
        }
    }
    return map;
}

ShadedImage render_point_cloud(const std::vector<CloudPoint>& cloud, const Camera& cam,
                               double ball_radius, const ShadingConfig& shading) {
    cam.validate();
    if (cloud.empty()) throw InputError("render_point_cloud: empty cloud");
    CameraFrame f = make_frame(cam);
    ShadedImage img;
    img.resolution = cam.resolution;
    img.pixels.assign(static_cast<std::size_t>(cam.resolution) * cam.resolution, 0.0f);
    std::vector<float> depth(img.pixels.size(), std::numeric_limits<float>::infinity());
    Vec3 l = (cam.eye - cam.target).normalized();  // light along the view axis

    for (const auto& p : cloud) {
        double row, col, z;
        Vec3 rel = p.position - f.eye;
        z = rel.dot(f.forward);
        if (z < cam.near_plane || z > cam.far_plane) continue;
        to_screen(f, rel.dot(f.right), rel.dot(f.down), z, col, row);
        // pixels per world unit at the point's depth
        double scale = cam.resolution / (2.0 * z * f.tan_half_fov);
        double pr = ball_radius * scale;
        int cmin = std::max(0, (int)std::ceil(col - pr));
        int cmax = std::min(cam.resolution - 1, (int)std::floor(col + pr));
        int rmin = std::max(0, (int)std::ceil(row - pr));
        int rmax = std::min(cam.resolution - 1, (int)std::floor(row + pr));
        Vec3 v = (f.eye - p.position).normalized();
        Vec3 n = p.normal ? *p.normal : v;
        float intensity = (float)phong(n, l, v, shading);
        for (int r = rmin; r <= rmax; ++r) {
            for (int c = cmin; c <= cmax; ++c) {
                double dx = c - col, dy = r - row;
                double rho = std::sqrt(dx * dx + dy * dy) / scale;  // world offset
                if (rho > ball_radius) continue;
                double zfrag = z - std::sqrt(ball_radius * ball_radius - rho * rho);
                std::size_t idx = (std::size_t)r * cam.resolution + c;
                if ((float)zfrag < depth[idx]) {
                    depth[idx] = (float)zfrag;
                    img.pixels[idx] = intensity;
                }
            }
        }
    }
    return img;
}

ShadedImage in_plane_rotate(const ShadedImage& img, int quarter_turns) {
    int q = ((quarter_turns % 4) + 4) % 4;
    if (q == 0) return img;
    const int n = img.resolution;
    ShadedImage out;
    out.resolution = n;
    out.pixels.resize(img.pixels.size());
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            int rr = r, cc = c;
            for (int t = 0; t < q; ++t) {
                int nr = cc, nc = n - 1 - rr;
                rr = nr;
                cc = nc;
            }
            out.at(rr, cc) = img.at(r, c);
        }
    return out;
}

void save_pgm(const ShadedImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write image: " + path);
    out << "P5\n" << img.resolution << ' ' << img.resolution << "\n255\n";
    for (float v : img.pixels) {
        int byte = (int)std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
        out.put(static_cast<char>(byte));
    }
}

ShadedImage load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open image: " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || w != h || maxval != 255)
        throw InputError(path + ": expected square binary PGM with maxval 255");
    in.get();  // single whitespace after header
    ShadedImage img;
    img.resolution = w;
    img.pixels.resize(static_cast<std::size_t>(w) * h);
    for (auto& v : img.pixels) {
        int byte = in.get();
        if (byte == EOF) throw InputError(path + ": truncated pixel data");
        v = static_cast<float>(byte) / 255.0f;
    }
    return img;
}

}  // namespace mvdesc
