// Lens geometry for the synchronized magnifier. All three panels show
// the same source-coordinate region, so the cursor position (given in
// normalized image coordinates) fully determines every placement.

export const ZOOM_LEVELS = [2, 4] as const;
export type ZoomLevel = (typeof ZOOM_LEVELS)[number];

export interface LensPlacement {
  // region of the source image to magnify, in source pixels
  sx: number;
  sy: number;
  sw: number;
  sh: number;
  // lens rectangle inside the panel, in panel pixels
  lx: number;
  ly: number;
  size: number;
}

const clamp = (v: number, lo: number, hi: number): number => Math.min(Math.max(v, lo), hi);

/**
 * Compute the lens placement for one panel.
 *
 * @param u,v      cursor position normalized to [0,1] on the image
 * @param imageW/H source image size in pixels
 * @param panelW/H panel display size in pixels
 * @param lensSize lens square edge in panel pixels
 * @param zoom     magnification factor
 */
export function lensPlacement(
  u: number,
  v: number,
  imageW: number,
  imageH: number,
  panelW: number,
  panelH: number,
  lensSize: number,
  zoom: ZoomLevel,
): LensPlacement {
  const uu = clamp(u, 0, 1);
  const vv = clamp(v, 0, 1);
  // source window: lensSize panel pixels at `zoom`, converted to source pixels
  const sw = (lensSize / zoom) * (imageW / panelW);
  const sh = (lensSize / zoom) * (imageH / panelH);
  const sx = clamp(uu * imageW - sw / 2, 0, Math.max(imageW - sw, 0));
  const sy = clamp(vv * imageH - sh / 2, 0, Math.max(imageH - sh, 0));
  // lens square centered on the cursor, clamped inside the panel
  const lx = clamp(uu * panelW - lensSize / 2, 0, Math.max(panelW - lensSize, 0));
  const ly = clamp(vv * panelH - lensSize / 2, 0, Math.max(panelH - lensSize, 0));
  return { sx, sy, sw, sh, lx, ly, size: lensSize };
}
