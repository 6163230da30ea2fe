import { decodeRle, type RleMask } from "./rle.js";

export type Viewport = {
  x: number; // image coordinate at the canvas origin
  y: number;
  scale: number; // canvas pixels per image pixel
};

const MIN_SCALE = 0.25;
const MAX_SCALE = 32;

export function screenToImage(vp: Viewport, sx: number, sy: number): { x: number; y: number } {
  return { x: vp.x + sx / vp.scale, y: vp.y + sy / vp.scale };
}

/** Zoom by a factor keeping the screen point (sx, sy) fixed. */
export function zoomAt(vp: Viewport, sx: number, sy: number, factor: number): Viewport {
  const scale = Math.min(MAX_SCALE, Math.max(MIN_SCALE, vp.scale * factor));
  const anchor = screenToImage(vp, sx, sy);
  return { x: anchor.x - sx / scale, y: anchor.y - sy / scale, scale };
}

export function panBy(vp: Viewport, dxScreen: number, dyScreen: number): Viewport {
  return { ...vp, x: vp.x - dxScreen / vp.scale, y: vp.y - dyScreen / vp.scale };
}

/** Write the mask into an RGBA buffer as a translucent tint (pure,
 * canvas-free, so the compositing rule is unit-testable). */
export function tintMask(
  mask: RleMask,
  rgba: [number, number, number, number],
): Uint8ClampedArray<ArrayBuffer> {
  const [h, w] = mask.size;
  const bits = decodeRle(mask);
  const out = new Uint8ClampedArray(new ArrayBuffer(h * w * 4));
  for (let i = 0; i < bits.length; i++) {
    if (!bits[i]) continue;
    out[i * 4] = rgba[0];
    out[i * 4 + 1] = rgba[1];
    out[i * 4 + 2] = rgba[2];
    out[i * 4 + 3] = rgba[3];
  }
  return out;
}

/** Canvas frame viewer with zoom/pan and a single overlay layer. */
export class FrameViewer {
  viewport: Viewport = { x: 0, y: 0, scale: 1 };
  private image: HTMLImageElement | null = null;
  private overlay: ImageData | null = null;

  constructor(private readonly canvas: HTMLCanvasElement) {}

  async loadFrame(url: string): Promise<void> {
    const img = new Image();
    img.src = url;
    await img.decode();
    this.image = img;
    this.overlay = null;
    // fit-to-canvas, then the user zooms in to click individual apples
    const fit = Math.min(this.canvas.width / img.width, this.canvas.height / img.height);
    this.viewport = { x: 0, y: 0, scale: Math.max(MIN_SCALE, fit) };
    this.render();
  }

  setOverlay(mask: RleMask | null): void {
    if (mask === null) {
      this.overlay = null;
    } else {
      const [h, w] = mask.size;
      this.overlay = new ImageData(tintMask(mask, [255, 64, 64, 140]), w, h);
    }
    this.render();
  }

  /** Map a canvas click to integer image coordinates; null when the click
   * lands outside the frame so no request is sent. */
  clickToPixel(sx: number, sy: number): { x: number; y: number } | null {
    if (!this.image) return null;
    const p = screenToImage(this.viewport, sx, sy);
    const x = Math.floor(p.x);
    const y = Math.floor(p.y);
    if (x < 0 || y < 0 || x >= this.image.width || y >= this.image.height) return null;
    return { x, y };
  }

  zoom(sx: number, sy: number, factor: number): void {
    this.viewport = zoomAt(this.viewport, sx, sy, factor);
    this.render();
  }

  pan(dx: number, dy: number): void {
    this.viewport = panBy(this.viewport, dx, dy);
    this.render();
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx || !this.image) return;
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.save();
    ctx.scale(this.viewport.scale, this.viewport.scale);
    ctx.translate(-this.viewport.x, -this.viewport.y);
    ctx.drawImage(this.image, 0, 0);
    if (this.overlay) {
      const tile = document.createElement("canvas");
      tile.width = this.overlay.width;
      tile.height = this.overlay.height;
      tile.getContext("2d")!.putImageData(this.overlay, 0, 0);
      ctx.drawImage(tile, 0, 0);
    }
    ctx.restore();
  }
}
