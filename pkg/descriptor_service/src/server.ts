import { AppState, createApp, loadModel } from "./app.js";

const args = process.argv.slice(2);
let port = 8081;
const flag = args.indexOf("--port");
if (flag >= 0 && args[flag + 1] !== undefined) {
  port = parseInt(args[flag + 1], 10);
  if (Number.isNaN(port)) {
    console.error(`bad --port value: ${args[flag + 1]}`);
    process.exit(2);
  }
}

const state: AppState = { model: null };
const app = createApp(state);
const server = app.listen(port, () => {
  // requests racing the startup see 503 and retry; the engine client does
  state.model = loadModel();
  console.log(`descriptor service on http://localhost:${port}`);
});
server.on("error", (e) => {
  console.error(String(e));
  process.exit(1);
});
