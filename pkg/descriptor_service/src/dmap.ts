/** DMAP binary: "DMAP" magic, u32 LE height/width/dim, float32 LE row-major. */

export function encodeDmap(
  height: number,
  width: number,
  dim: number,
  data: Float32Array,
): Buffer {
  if (data.length !== height * width * dim) {
    throw new Error(
      `dmap payload ${data.length} != ${height}x${width}x${dim}`,
    );
  }
  const buf = Buffer.alloc(16 + data.length * 4);
  buf.write("DMAP", 0, "ascii");
  buf.writeUInt32LE(height, 4);
  buf.writeUInt32LE(width, 8);
  buf.writeUInt32LE(dim, 12);
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i], 16 + i * 4);
  }
  return buf;
}
