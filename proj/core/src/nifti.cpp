#include <cstring>
#include <fstream>

#include "sstdunet/volume.hpp"

namespace sstdunet {

namespace {

// The published 348-byte NIfTI-1 header. All fields are naturally aligned,
// so the struct layout matches the file layout exactly.
struct NiftiHeader {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(NiftiHeader) == 348);

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;

template <typename T>
void bswap(T& v) {
  auto* b = reinterpret_cast<unsigned char*>(&v);
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
}

void swap_header(NiftiHeader& h) {
  bswap(h.sizeof_hdr);
  bswap(h.extents);
  bswap(h.session_error);
  for (auto& v : h.dim) bswap(v);
  bswap(h.intent_p1);
  bswap(h.intent_p2);
  bswap(h.intent_p3);
  bswap(h.intent_code);
  bswap(h.datatype);
  bswap(h.bitpix);
  bswap(h.slice_start);
  for (auto& v : h.pixdim) bswap(v);
  bswap(h.vox_offset);
  bswap(h.scl_slope);
  bswap(h.scl_inter);
  bswap(h.slice_end);
  bswap(h.cal_max);
  bswap(h.cal_min);
  bswap(h.slice_duration);
  bswap(h.toffset);
  bswap(h.glmax);
  bswap(h.glmin);
  bswap(h.qform_code);
  bswap(h.sform_code);
  bswap(h.quatern_b);
  bswap(h.quatern_c);
  bswap(h.quatern_d);
  bswap(h.qoffset_x);
  bswap(h.qoffset_y);
  bswap(h.qoffset_z);
  for (auto& v : h.srow_x) bswap(v);
  for (auto& v : h.srow_y) bswap(v);
  for (auto& v : h.srow_z) bswap(v);
}

template <typename T>
void decode(const std::vector<char>& raw, std::vector<float>& out, bool swapped) {
  const std::size_t n = raw.size() / sizeof(T);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
    if (swapped) bswap(v);
    out[i] = float(v);
  }
}

}  // namespace

Volume read_nifti(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path);
  NiftiHeader h{};
  is.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!is) throw ParseError(path + ": truncated header at byte offset 0");
  bool swapped = false;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    swapped = true;
    if (h.sizeof_hdr != 348)
      throw ParseError(path + ": bad sizeof_hdr at byte offset 0 (not 348 in either byte order)");
  }
  if (std::memcmp(h.magic, "n+1", 4) != 0 && std::memcmp(h.magic, "ni1", 4) != 0)
    throw ParseError(path + ": bad magic at byte offset 344");
  if (std::memcmp(h.magic, "ni1", 4) == 0)
    throw ParseError(path + ": two-file (.hdr/.img) NIfTI is not supported");
  if (h.dim[0] < 3 || h.dim[0] > 4)
    throw ParseError(path + ": unsupported rank " + std::to_string(h.dim[0]) +
                     " at byte offset 40");
  Volume vol;
  for (int a = 0; a < 3; ++a) {
    if (h.dim[a + 1] <= 0)
      throw ParseError(path + ": nonpositive extent at byte offset " +
                       std::to_string(40 + 2 * (a + 1)));
    vol.dims[a] = std::size_t(h.dim[a + 1]);
    vol.spacing[a] = h.pixdim[a + 1] > 0 ? double(h.pixdim[a + 1]) : 1.0;
  }
  vol.nt = h.dim[0] == 4 ? std::size_t(std::max<std::int16_t>(h.dim[4], 1)) : 1;

  std::size_t elem = 0;
  switch (h.datatype) {
    case kDtUint8: elem = 1; break;
    case kDtInt16: elem = 2; break;
    case kDtFloat32: elem = 4; break;
    case kDtFloat64: elem = 8; break;
    default:
      throw ParseError(path + ": unsupported datatype code " + std::to_string(h.datatype) +
                       " at byte offset 70");
  }
  const std::size_t count = vol.voxels() * vol.nt;
  const std::streamoff offset = std::streamoff(h.vox_offset > 0 ? h.vox_offset : 352.0f);
  is.seekg(offset);
  std::vector<char> raw(count * elem);
  is.read(raw.data(), std::streamsize(raw.size()));
  if (!is)
    throw ParseError(path + ": truncated voxel data at byte offset " +
                     std::to_string(offset));
  switch (h.datatype) {
    case kDtUint8: decode<std::uint8_t>(raw, vol.data, false); break;
    case kDtInt16: decode<std::int16_t>(raw, vol.data, swapped); break;
    case kDtFloat32: decode<float>(raw, vol.data, swapped); break;
    case kDtFloat64: decode<double>(raw, vol.data, swapped); break;
  }
  // slope 0 means "no scaling" per the standard
  const float slope = h.scl_slope;
  if (slope != 0.0f && !(slope == 1.0f && h.scl_inter == 0.0f))
    for (auto& v : vol.data) v = v * slope + h.scl_inter;
  return vol;
}

void write_nifti(const Volume& vol, const std::string& path) {
  if (vol.data.size() != vol.voxels() * vol.nt)
    throw ContractError("volume data length does not match dims");
  NiftiHeader h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = vol.nt > 1 ? 4 : 3;
  h.dim[1] = std::int16_t(vol.dims[0]);
  h.dim[2] = std::int16_t(vol.dims[1]);
  h.dim[3] = std::int16_t(vol.dims[2]);
  h.dim[4] = std::int16_t(vol.nt > 1 ? vol.nt : 1);
  for (int a = h.dim[0] + 1; a < 8; ++a) h.dim[a] = 1;
  h.datatype = kDtFloat32;
  h.bitpix = 32;
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = float(vol.spacing[a]);
  h.pixdim[4] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.qform_code = 0;
  h.sform_code = 1;
  h.srow_x[0] = float(vol.spacing[0]);
  h.srow_y[1] = float(vol.spacing[1]);
  h.srow_z[2] = float(vol.spacing[2]);
  std::memcpy(h.magic, "n+1", 4);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open for write: " + path);
  os.write(reinterpret_cast<const char*>(&h), sizeof(h));
  const char pad[4] = {0, 0, 0, 0};  // extension flag, all zero
  os.write(pad, 4);
  os.write(reinterpret_cast<const char*>(vol.data.data()),
           std::streamsize(vol.data.size() * sizeof(float)));
  if (!os) throw ParseError("write failed: " + path);
}

}  // namespace sstdunet
