// Browser entry point: wire the app to the same-origin service and honor
// ?session=<id> so reloads reconstruct the transcript from the server.

import { TutorApi } from "./api.js";
import { initApp } from "./main.js";

const root = document.getElementById("app");
if (root) {
  const params = new URLSearchParams(window.location.search);
  initApp(root, new TutorApi(""), params.get("session"));
}
