import express from "express";
import multer from "multer";
import { PNG } from "pngjs";

import {
  DIM,
  GrayImage,
  MAX_SIDE,
  MODEL_NAME,
  STRIDES,
  describe,
} from "./descriptor.js";
import { encodeDmap } from "./dmap.js";

/** Rec. 601 luma from RGBA; grayscale PNGs arrive with r = g = b. */
function toGray(png: PNG): GrayImage {
  const { width, height, data } = png;
  const gray = new Float32Array(width * height);
  for (let i = 0; i < gray.length; i++) {
    const o = i * 4;
    gray[i] =
      (0.299 * data[o] + 0.587 * data[o + 1] + 0.114 * data[o + 2]) / 255.0;
  }
  return { width, height, data: gray };
}

export interface AppState {
  /** null until the model finishes loading; /describe answers 503 before. */
  model: { name: string; dim: number } | null;
}

export function createApp(state: AppState): express.Express {
  const app = express();
  const upload = multer({
    storage: multer.memoryStorage(),
    limits: { fileSize: 32 * 1024 * 1024 },
  });

  app.get("/health", (_req, res) => {
    res.json({ model: MODEL_NAME, dim: DIM });
  });

  app.post("/describe", upload.single("image"), (req, res) => {
    if (state.model === null) {
      res.status(503).json({ error: "model not loaded" });
      return;
    }
    if (!req.file) {
      res.status(400).json({ error: "missing image part" });
      return;
    }
    let stride = 1;
    const params = (req.body ?? {})["params"];
    if (params !== undefined) {
      try {
        const parsed = JSON.parse(params);
        if (parsed.stride !== undefined) stride = parsed.stride;
      } catch {
        res.status(400).json({ error: "params is not valid JSON" });
        return;
      }
    }
    if (!STRIDES.includes(stride)) {
      res.status(400).json({ error: `stride must be one of ${STRIDES}` });
      return;
    }
    let png: PNG;
    try {
      png = PNG.sync.read(req.file.buffer);
    } catch (e) {
      res.status(400).json({ error: `malformed image: ${e}` });
      return;
    }
    if (png.width > MAX_SIDE || png.height > MAX_SIDE) {
      res.status(400).json({
        error: `image ${png.width}x${png.height} exceeds ${MAX_SIDE}`,
      });
      return;
    }
    const feats = describe(toGray(png), stride);
    res
      .type("application/octet-stream")
      .send(encodeDmap(png.height, png.width, DIM, feats));
  });

  return app;
}

export function loadModel(): { name: string; dim: number } {
  return { name: MODEL_NAME, dim: DIM };
}
