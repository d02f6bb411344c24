import { defineConfig } from "vite";

export default defineConfig({
  base: "/ui/",
  build: { outDir: "dist", emptyOutDir: true },
  server: {
    proxy: {
      "/v1": "http://127.0.0.1:8765",
      "/store": "http://127.0.0.1:8765",
    },
  },
});
