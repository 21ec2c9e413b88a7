/* Reference oracle built on libjpeg.
 *
 *   jpeg_oracle encode <in.pnm> <out.jpg> <quality> <restart_rows> <optimize>
 *   jpeg_oracle dump   <in.jpg> <out.txt>
 *   jpeg_oracle decode <in.jpg> <out.pnm>
 *
 * dump writes one line per block: component blockRow blockCol c0 .. c63,
 * coefficients in natural (row-major) order, quantized, as stored in the scan.
 * decode uses the floating-point IDCT.
 */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <jpeglib.h>

static int read_pnm(const char *path, int *w, int *h, int *c, unsigned char **px) {
  FILE *f = fopen(path, "rb");
  char magic[3] = {0};
  int maxv;
  if (!f || fscanf(f, "%2s %d %d %d", magic, w, h, &maxv) != 4) return -1;
  fgetc(f);
  *c = strcmp(magic, "P6") == 0 ? 3 : 1;
  size_t n = (size_t)(*w) * (*h) * (*c);
  *px = malloc(n);
  if (fread(*px, 1, n, f) != n) return -1;
  fclose(f);
  return 0;
}

static int encode(const char *in, const char *out, int q, int restart_rows, int optimize) {
  int w, h, c;
  unsigned char *px;
  if (read_pnm(in, &w, &h, &c, &px)) return 1;
  struct jpeg_compress_struct ci;
  struct jpeg_error_mgr jerr;
  ci.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&ci);
  FILE *f = fopen(out, "wb");
  jpeg_stdio_dest(&ci, f);
  ci.image_width = w;
  ci.image_height = h;
  ci.input_components = c;
  ci.in_color_space = c == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_set_defaults(&ci);
  jpeg_set_quality(&ci, q, TRUE);
  for (int i = 0; i < ci.num_components; i++) {
    ci.comp_info[i].h_samp_factor = 1;
    ci.comp_info[i].v_samp_factor = 1;
  }
  ci.restart_in_rows = restart_rows;
  ci.optimize_coding = optimize;
  ci.dct_method = JDCT_ISLOW;
  jpeg_start_compress(&ci, TRUE);
  while (ci.next_scanline < ci.image_height) {
    JSAMPROW row = px + (size_t)ci.next_scanline * w * c;
    jpeg_write_scanlines(&ci, &row, 1);
  }
  jpeg_finish_compress(&ci);
  fclose(f);
  jpeg_destroy_compress(&ci);
  free(px);
  return 0;
}

static int dump(const char *in, const char *out) {
  struct jpeg_decompress_struct di;
  struct jpeg_error_mgr jerr;
  di.err = jpeg_std_error(&jerr);
  jpeg_create_decompress(&di);
  FILE *f = fopen(in, "rb");
  jpeg_stdio_src(&di, f);
  jpeg_read_header(&di, TRUE);
  jvirt_barray_ptr *coefs = jpeg_read_coefficients(&di);
  FILE *o = fopen(out, "w");
  for (int ci = 0; ci < di.num_components; ci++) {
    jpeg_component_info *comp = &di.comp_info[ci];
    for (JDIMENSION r = 0; r < comp->height_in_blocks; r++) {
      JBLOCKARRAY rows = (*di.mem->access_virt_barray)((j_common_ptr)&di, coefs[ci], r, 1, FALSE);
      for (JDIMENSION col = 0; col < comp->width_in_blocks; col++) {
        fprintf(o, "%d %u %u", ci, r, col);
        for (int k = 0; k < DCTSIZE2; k++) fprintf(o, " %d", rows[0][col][k]);
        fputc('\n', o);
      }
    }
  }
  fclose(o);
  jpeg_finish_decompress(&di);
  jpeg_destroy_decompress(&di);
  fclose(f);
  return 0;
}

static int decode(const char *in, const char *out) {
  struct jpeg_decompress_struct di;
  struct jpeg_error_mgr jerr;
  di.err = jpeg_std_error(&jerr);
  jpeg_create_decompress(&di);
  FILE *f = fopen(in, "rb");
  jpeg_stdio_src(&di, f);
  jpeg_read_header(&di, TRUE);
  di.dct_method = JDCT_FLOAT;
  di.do_fancy_upsampling = FALSE;
  jpeg_start_decompress(&di);
  int w = di.output_width, h = di.output_height, c = di.output_components;
  unsigned char *px = malloc((size_t)w * h * c);
  while (di.output_scanline < di.output_height) {
    JSAMPROW row = px + (size_t)di.output_scanline * w * c;
    jpeg_read_scanlines(&di, &row, 1);
  }
  FILE *o = fopen(out, "wb");
  fprintf(o, "%s\n%d %d\n255\n", c == 3 ? "P6" : "P5", w, h);
  fwrite(px, 1, (size_t)w * h * c, o);
  fclose(o);
  jpeg_finish_decompress(&di);
  jpeg_destroy_decompress(&di);
  fclose(f);
  free(px);
  return 0;
}

int main(int argc, char **argv) {
  if (argc >= 7 && !strcmp(argv[1], "encode"))
    return encode(argv[2], argv[3], atoi(argv[4]), atoi(argv[5]), atoi(argv[6]));
  if (argc >= 4 && !strcmp(argv[1], "dump")) return dump(argv[2], argv[3]);
  if (argc >= 4 && !strcmp(argv[1], "decode")) return decode(argv[2], argv[3]);
  fprintf(stderr, "usage: jpeg_oracle encode|dump|decode ...\n");
  return 2;
}
