export type RleMask = {
  size: [number, number]; // [height, width]
  counts: number[]; // alternating background/foreground runs, row-major
};

/** Decode a run-length mask into a flat row-major Uint8Array (0/1). */
export function decodeRle(rle: RleMask): Uint8Array {
  const [h, w] = rle.size;
  const total = rle.counts.reduce((a, b) => a + b, 0);
  if (total !== h * w && !(total === 0 && h * w === 0)) {
    throw new Error(`RLE counts sum to ${total}, expected ${h * w}`);
  }
  const out = new Uint8Array(h * w);
  let pos = 0;
  let value = 0;
  for (const run of rle.counts) {
    if (value) out.fill(1, pos, pos + run);
    pos += run;
    value = 1 - value;
  }
  return out;
}

export function maskArea(rle: RleMask): number {
  let area = 0;
  for (let i = 1; i < rle.counts.length; i += 2) area += rle.counts[i];
  return area;
}
